use thiserror::Error;

/// Errors raised by the adaptation library and the navigation benchmark.
#[derive(Debug, Error)]
pub enum Error {
    /// Input contained NaN/Inf or otherwise violated a data precondition.
    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    Asymmetric(f64),

    /// Jacobi sweeps exhausted before the off-diagonal mass vanished.
    #[error("eigen iteration did not converge after {sweeps} sweeps (off-diagonal {off:e})")]
    NoConvergence { sweeps: usize, off: f64 },

    /// A gradient window needs at least two rows for a covariance.
    #[error("gradient window holds {count} gradients, need at least 2")]
    InsufficientWindow { count: usize },

    #[error("training failed: {0}")]
    Training(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerical kernels (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NoConvergence { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
