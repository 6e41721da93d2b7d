//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("poisson solve failed: relative residual {residual:.3e} after {iterations} iterations (tol {tol:.1e})")]
    PoissonSolveFailure {
        residual: f64,
        iterations: usize,
        tol: f64,
    },

    #[error("invalid exponent s = {0}; require 1 <= s < inf")]
    InvalidExponent(f64),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("bad field file: {0}")]
    Format(String),

    #[error("nonlinear iteration stalled: {0}")]
    NonlinearDivergence(String),

    #[error("linear solve failed: {0}")]
    LinearSolveFailure(String),

    #[error("line search failed: {0}")]
    LineSearchFailure(String),

    #[error("infeasible point: {0}")]
    Infeasible(String),

    #[error("degenerate perturbation shape: {0}")]
    DegenerateShape(String),

    #[error("insufficient feasible samples: {0}")]
    InsufficientFeasibleSamples(String),

    #[error("unsupported objective: {0}")]
    UnsupportedObjective(String),

    #[error("ekeland search failed: {0}")]
    EkelandSearchFailure(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
