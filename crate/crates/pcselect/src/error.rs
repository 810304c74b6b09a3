//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside the domain of the operation (bad alpha, rho, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Input data is malformed or unusable (missing value, constant column, ...).
    #[error("data error: {0}")]
    Data(String),

    /// A model specification is invalid (non-positive-definite covariance, ...).
    #[error("model error: {0}")]
    Model(String),

    /// The query cannot produce a trustworthy number (ill-conditioned or
    /// degenerate correlation submatrix). Callers decide how to proceed;
    /// the selection algorithm retains the variable conservatively.
    #[error("non-informative query: {0}")]
    NonInformative(String),

    /// The request exceeds a hard enumeration cap.
    #[error("capability error: {0}")]
    Capability(String),

    /// Least-squares refit failed.
    #[error("refit error: {0}")]
    Refit(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
