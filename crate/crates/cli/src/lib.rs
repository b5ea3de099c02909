//! Experiment driver behind the `saa` binary.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod commands;
pub mod config;

use std::fmt;

pub use config::ExperimentConfig;

/// Failure classes mapped onto process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// A checked property did not hold (exit 1).
    Assertion(String),
    /// A state, adjoint or optimization solve failed, or output could not be written (exit 2).
    Solver(String),
    /// The configuration was rejected before solving (exit 3).
    Config(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Assertion(_) => 1,
            CliError::Solver(_) => 2,
            CliError::Config(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Assertion(m) => write!(f, "check failed: {m}"),
            CliError::Solver(m) => write!(f, "solver failure: {m}"),
            CliError::Config(m) => write!(f, "invalid configuration: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<saa_core::Error> for CliError {
    fn from(e: saa_core::Error) -> Self {
        use saa_core::Error as E;
        match e {
            E::InvalidConfig(_) | E::UnknownProblemTag(_) | E::UnsupportedContinuousModel => {
                CliError::Config(e.to_string())
            }
            E::ViolationFound { .. } => CliError::Assertion(e.to_string()),
            _ => CliError::Solver(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Solver(format!("I/O: {e}"))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Solver(format!("CSV: {e}"))
    }
}
