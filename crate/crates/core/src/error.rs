use thiserror::Error;

use crate::pde::SolveReport;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate triangle {index}: signed area {area:e}")]
    DegenerateTriangle { index: usize, area: f64 },

    #[error("nonpositive coefficient {value:e} on element {element}")]
    NonpositiveCoefficient { element: usize, value: f64 },

    #[error("generalized eigenvalue iteration did not converge")]
    EigSolveFailure,

    #[error("space mismatch: {0}")]
    SpaceMismatch(String),

    #[error("matrix is not positive definite (pivot {pivot:e} in row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("singular Jacobian")]
    SingularJacobian,

    #[error("singular system")]
    SingularSystem,

    #[error(
        "Newton iteration diverged after {} iterations (residual {:e})",
        report.iterations,
        report.final_residual
    )]
    NewtonDivergence { report: SolveReport },

    #[error("exact expectation requires a finite-support random model")]
    UnsupportedContinuousModel,

    #[error("line search stalled at iteration {iteration} (step {step:e})")]
    LineSearchStall { iteration: usize, step: f64 },

    #[error("non-finite objective or gradient")]
    NonFiniteValue,

    #[error("sample {index}: {source}")]
    Sample {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("unknown problem tag `{0}`")]
    UnknownProblemTag(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("epsilon-optimality violated: F_N(u) = {value:e} > eps = {eps:e}")]
    ViolationFound {
        control: Vec<f64>,
        value: f64,
        eps: f64,
    },
}

impl Error {
    /// Wraps a per-sample failure with the index of the offending sample.
    pub fn at_sample(index: usize, source: Error) -> Self {
        Error::Sample {
            index,
            source: Box::new(source),
        }
    }

    /// True for failures of a state or adjoint solve (as opposed to bad input).
    pub fn is_solver_failure(&self) -> bool {
        match self {
            Error::NewtonDivergence { .. }
            | Error::SingularJacobian
            | Error::SingularSystem
            | Error::NotPositiveDefinite { .. }
            | Error::EigSolveFailure
            | Error::LineSearchStall { .. }
            | Error::NonFiniteValue => true,
            Error::Sample { source, .. } => source.is_solver_failure(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
