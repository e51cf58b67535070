//! Error type shared by every module of the crate.

use thiserror::Error;

/// Failure modes of the toolkit.
///
/// Variants are split into two families: input validation problems
/// (see [`QodeError::is_validation`]) and computational failures.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum QodeError {
    /// A caller-supplied value is out of its admissible range.
    #[error("invalid value for `{field}`: {reason}")]
    InvalidInput { field: &'static str, reason: String },

    /// A value required by the selected scheme or target is absent.
    #[error("missing required input `{0}`")]
    MissingInput(&'static str),

    /// Operand shapes do not agree.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A desk-scale size guard was exceeded.
    #[error("size guard exceeded: {0}")]
    Guard(String),

    /// An iterative method failed to converge.
    #[error("no convergence: {0}")]
    NonConvergence(String),

    /// A matrix is numerically singular.
    #[error("numerically singular matrix: {0}")]
    Singular(String),

    /// Floating-point overflow or a non-finite intermediate.
    #[error("non-finite result: {0}")]
    NonFinite(String),
}

impl QodeError {
    /// Convenience constructor for [`QodeError::InvalidInput`].
    pub fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        QodeError::InvalidInput {
            field,
            reason: reason.into(),
        }
    }

    /// True for errors caused by the request rather than by the computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            QodeError::InvalidInput { .. }
                | QodeError::MissingInput(_)
                | QodeError::Dimension(_)
                | QodeError::Guard(_)
        )
    }
}

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, QodeError>;
