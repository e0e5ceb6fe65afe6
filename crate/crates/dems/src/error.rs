//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by observers, noise models and the simulation lab.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A parameter violates a precondition (e.g. `s <= 0`, empty window).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Matrix or vector shapes are mutually inconsistent.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A numerical operation failed (singular system, loss of positive
    /// definiteness, ill conditioning).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A recursion produced non-finite values; `step` is the first bad step.
    #[error("divergence at step {step}: {reason}")]
    Divergence { step: usize, reason: String },

    /// Malformed input data (CSV parsing, inconsistent headers).
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}
