use thiserror::Error;

/// Errors surfaced by the library. Callers that need process exit codes map
/// usage mistakes to 2 and everything else to 1.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid geography: {0}")]
    InvalidGeography(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("integration stalled near t = {t}: step size underflow (residual {residual:.3e})")]
    Stiffness { t: f64, residual: f64, last_state: Vec<f64> },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
