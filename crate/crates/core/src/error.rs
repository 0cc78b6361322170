use thiserror::Error;

/// Errors raised by measure construction, operator evaluation and the solvers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unsupported jump dimension {0} (expected 1 or 2)")]
    UnsupportedDimension(usize),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("jump linearization has no continuous extension at a zero gradient")]
    SingularGradient,

    #[error("restricted measure has infinite mass; use a positive cutoff")]
    InfiniteMass,

    #[error("point {0:?} lies outside the computational box")]
    OutOfDomain(Vec<f64>),

    #[error("linear solve did not reach tolerance after {iterations} iterations (residual {residual:e})")]
    LinearSolveFailure { iterations: usize, residual: f64 },

    #[error("time step {dt:e} violates the stability bound (max {max_dt:e})")]
    CflViolation { dt: f64, max_dt: f64 },

    #[error("solution blew up at t = {time}: sup norm {sup_norm:e} exceeds {limit:e}")]
    Blowup { time: f64, sup_norm: f64, limit: f64 },

    #[error("iteration did not converge after {iterations} iterations (last update {last_update:e})")]
    NoConvergence { iterations: usize, last_update: f64 },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
