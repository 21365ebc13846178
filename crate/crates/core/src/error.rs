//! Error type shared by every module.

use thiserror::Error;

/// Errors raised by validation, numerical routines and the oracle.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A parameter lies outside its admissible domain.
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    /// A pgf argument lies outside [0, 1].
    #[error("argument {x} is outside [0, 1]")]
    Domain { x: f64 },

    /// Two matrices of different size were combined.
    #[error("dimension mismatch: expected {expected}x{expected}, found {found}x{found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// The requested criterion has no clause for this offspring family.
    #[error("unsupported offspring family for this criterion: {0}")]
    UnsupportedFamily(String),

    /// A supplied edge-weight law does not have the required shape.
    #[error("edge-weight law mismatch: {0}")]
    LawMismatch(String),

    /// A theorem hypothesis required by the computation does not hold.
    #[error("hypothesis violation: {0}")]
    HypothesisViolation(String),

    /// Results contradict a structural property that must hold.
    #[error("internal inconsistency: {0}")]
    InternalInconsistency(String),

    /// A precondition of an operation was not met.
    #[error("precondition failed: {0}")]
    Precondition(String),

    /// A sampled tree grew past the node cap.
    #[error("sampled tree exceeded the node cap of {cap}")]
    NodeCapExceeded { cap: usize },

    /// An iteration did not reach the requested tolerance.
    #[error("no convergence after {iterations} iterations (last change {residual:e})")]
    NonConvergence { iterations: u64, residual: f64 },
}

/// Convenience alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(field: &str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        field: field.to_string(),
        reason: reason.into(),
    }
}
