//! Error type shared by all solver and simulation modules.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input violated a documented precondition (non-Hermitian matrix,
    /// indefinite matrix, nonpositive budget, ...).
    #[error("contract violation: {0}")]
    ContractViolation(String),

    /// An argument was outside its admissible range.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A matrix that must be invertible for the requested operation was
    /// singular at working precision.
    #[error("singular matrix: {0}")]
    Singular(String),

    /// A channel realization made a construction degenerate (e.g. the linear
    /// system for a channel-matched shaping matrix is rank deficient).
    #[error("degenerate channel: {0}")]
    DegenerateChannel(String),

    /// Matrix dimensions do not line up with the network description.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

impl Error {
    pub fn contract(msg: impl Into<String>) -> Self {
        Error::ContractViolation(msg.into())
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn singular(msg: impl Into<String>) -> Self {
        Error::Singular(msg.into())
    }

    pub fn dims(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }
}
