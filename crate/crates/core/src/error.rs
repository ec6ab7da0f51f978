use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// Cholesky factorization failed even after the single jitter retry.
    #[error("Cholesky factorization failed after jitter retry (smallest pivot {pivot:e} at row {row})")]
    Factorization { pivot: f64, row: usize },

    #[error("linear solver did not reach tolerance (relative residual {residual:e} after {iterations} iterations)")]
    SolverDivergence { residual: f64, iterations: usize },

    #[error("empty chain: no post-burn-in samples")]
    EmptyChain,

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerical kernels (factorizations, solvers).
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Factorization { .. } | Error::SolverDivergence { .. })
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
