use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("variance undefined: degrees of freedom {df} must exceed 2")]
    VarianceUndefined { df: f64 },

    #[error("probability {0} outside the open interval (0, 1)")]
    ProbabilityOutOfRange(f64),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("too few samples: got {got}, need at least {need}")]
    TooFewSamples { got: usize, need: usize },

    #[error("non-finite log density at {point:?}")]
    NonFiniteLogDensity { point: Vec<f64> },

    #[error("non-finite gradient: {0}")]
    NonFiniteGradient(String),

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("quadrature did not converge: {0}")]
    QuadratureNonConvergence(String),

    #[error("optimizer diverged at iteration {iteration}")]
    Diverged {
        iteration: usize,
        trace_prefix: Vec<(usize, f64)>,
    },

    #[error("tail too small: {0} excesses, need at least 5")]
    TailTooSmall(usize),

    #[error("estimator inconsistency: CUBO {cubo} is below ELBO {elbo} by more than {tolerance}")]
    EstimatorInconsistency { cubo: f64, elbo: f64, tolerance: f64 },

    #[error("exponential moment estimate unstable at epsilon {epsilon}; use epsilon below {max_stable}")]
    UnstableEpsilon { epsilon: f64, max_stable: f64 },

    #[error("{0}")]
    Unsupported(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
