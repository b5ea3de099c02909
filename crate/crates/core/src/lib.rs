//! Sample average approximation (SAA) for risk-neutral PDE-constrained
//! optimization.
//!
//! The crate provides P1 discretizations on structured meshes, damped
//! Newton state solves with adjoint gradients, four concrete problem
//! instances with their stability envelopes, a proximal gradient solver
//! with a fixed-point stationarity test, and the experiment drivers that
//! check consistency of SAA optimal values and solutions.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod linalg;
pub mod mesh;
mod par;
pub mod pde;
pub mod problems;
pub mod prox;
pub mod random;
pub mod report;
pub mod saa;

pub use error::{Error, Result};
