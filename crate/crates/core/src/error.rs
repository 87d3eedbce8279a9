use num_complex::Complex64;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid conductivity field: {0}")]
    InvalidField(String),

    #[error("linear solver failed: {0}")]
    SolverFailure(String),

    #[error("matrix is ill-conditioned (condition estimate {condition:.3e}): {context}")]
    IllConditioned { context: String, condition: f64 },

    #[error("CGO trace solve did not converge at k = {k}: relative residual {residual:.3e}")]
    CgoNotConverged { k: Complex64, residual: f64 },

    #[error("iteration did not converge after {iterations} steps: {context} (residual {residual:.3e})")]
    NotConverged {
        context: String,
        iterations: usize,
        residual: f64,
    },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures caused by user input rather than by the numerics.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Format(_) | Error::Json(_) | Error::InvalidField(_)
        )
    }
}
