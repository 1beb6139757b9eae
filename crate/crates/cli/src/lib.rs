//! Command-line front end for the adaptive-resolution detection library:
//! dataset generation, policy training, evaluation, numeric diagnostics,
//! and decision visualization, with file formats that are byte-stable for
//! a given configuration and seed.

pub mod cmd;
pub mod config;
pub mod formats;

use std::path::PathBuf;

/// Process-level failure, mapped onto the exit-code contract: usage and
/// input problems exit 2, a failed diagnostic bound exits 1, and a numeric
/// failure during training exits 3 (after writing a checkpoint).
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Diagnostic(String),
    #[error("{message}")]
    Numeric { message: String, checkpoint: Option<PathBuf> },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Diagnostic(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Numeric { .. } => 3,
        }
    }
}

impl From<zoomcascade_core::Error> for CliError {
    fn from(err: zoomcascade_core::Error) -> Self {
        match err {
            zoomcascade_core::Error::NonFinite { .. } => {
                CliError::Numeric { message: err.to_string(), checkpoint: None }
            }
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Usage(err.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(err: serde_json::Error) -> Self {
        CliError::Usage(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

/// `path` prefixed onto an IO error so the message names the file.
pub fn io_context(path: &std::path::Path, err: std::io::Error) -> CliError {
    CliError::Usage(format!("{}: {err}", path.display()))
}
