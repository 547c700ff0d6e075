use thiserror::Error;

/// Errors raised by the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Two objects that must share a shape do not.
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    /// The covariance stays indefinite after the whole jitter ladder.
    #[error("matrix is not positive semidefinite (most negative pivot {pivot:e})")]
    NotPsd { pivot: f64 },

    /// A construction would exceed a configured size cap.
    #[error("resource limit: {0}")]
    Resource(String),

    /// The surrogate optimum does not exist (for instance zero discrepancy).
    #[error("degenerate parameters: {0}")]
    Degenerate(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
