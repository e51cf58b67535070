//! CLI error type and the exit-code contract.

use qode_core::QodeError;
use thiserror::Error;

/// Exit code for success.
pub const EXIT_OK: u8 = 0;
/// Exit code when `verify` ran but at least one check failed.
pub const EXIT_CHECK_FAILED: u8 = 1;
/// Exit code for invalid input: flags, configuration, files, guards.
pub const EXIT_VALIDATION: u8 = 2;
/// Exit code for numerical failures during the computation.
pub const EXIT_COMPUTATION: u8 = 3;

/// Failure of a CLI command.
#[derive(Debug, Error)]
pub enum CliError {
    /// Rejected input, reported with exit code 2.
    #[error("{0}")]
    Validation(String),

    /// Failed computation, reported with exit code 3.
    #[error("{0}")]
    Computation(String),
}

impl CliError {
    /// Process exit code for this error.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Computation(_) => EXIT_COMPUTATION,
        }
    }

    /// Validation error with a path prefix.
    pub fn io(path: &str, err: impl std::fmt::Display) -> Self {
        CliError::Validation(format!("{path}: {err}"))
    }
}

impl From<QodeError> for CliError {
    fn from(err: QodeError) -> Self {
        if err.is_validation() {
            CliError::Validation(err.to_string())
        } else {
            CliError::Computation(err.to_string())
        }
    }
}

/// Result alias for CLI operations.
pub type CliResult<T> = std::result::Result<T, CliError>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn core_errors_map_to_contract_codes() {
        assert_eq!(CliError::from(QodeError::MissingInput("x_min")).exit_code(), 2);
        assert_eq!(CliError::from(QodeError::Guard("M".into())).exit_code(), 2);
        assert_eq!(CliError::from(QodeError::NonConvergence("lanczos".into())).exit_code(), 3);
        assert_eq!(CliError::from(QodeError::Singular("L".into())).exit_code(), 3);
        assert!(CliError::from(QodeError::MissingInput("x_min")).to_string().contains("x_min"));
    }
}
