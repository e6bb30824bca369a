//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by simulation, evaluation, and inference routines.
#[derive(Debug, Error)]
pub enum AalenError {
    /// A model or configuration failed structural validation.
    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    /// Two objects that must share a support window do not.
    #[error("domain mismatch: {0}")]
    DomainMismatch(String),

    /// A precondition on arguments was violated.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// A numeric routine produced or encountered a non-finite value
    /// where a finite one is required.
    #[error("non-finite value in {context}: {value}")]
    NonFinite { context: String, value: f64 },

    /// A dominating bound supplied for thinning was exceeded.
    #[error("dominating bound {bound} exceeded at t = {at}: value {value}")]
    BoundExceeded { bound: f64, at: f64, value: f64 },

    /// An MCMC chain failed a health check (e.g. a move type whose
    /// acceptance rate collapsed after adaptation ended).
    #[error("chain diagnostic failure: {0}")]
    ChainDiagnostic(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("config parse error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, AalenError>;

impl AalenError {
    /// Convenience constructor for [`AalenError::InvalidSpec`].
    pub fn invalid(msg: impl Into<String>) -> Self {
        AalenError::InvalidSpec(msg.into())
    }

    /// Convenience constructor for [`AalenError::Precondition`].
    pub fn pre(msg: impl Into<String>) -> Self {
        AalenError::Precondition(msg.into())
    }
}
