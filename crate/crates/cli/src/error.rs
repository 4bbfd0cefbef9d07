use std::path::{Path, PathBuf};

use wardcast_core::error::ErrorCategory;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

/// Errors surfaced by the command line, each mapped to an exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] wardcast_core::Error),
    #[error("{0}")]
    Config(String),
    #[error("{path}: {message}")]
    File { path: PathBuf, message: String },
    #[error("{path}:{line}: {message}")]
    Row { path: PathBuf, line: u64, message: String },
    #[error("{0}")]
    Missing(String),
}

impl CliError {
    pub fn file(path: &Path, message: impl ToString) -> Self {
        CliError::File { path: path.to_path_buf(), message: message.to_string() }
    }

    pub fn config(message: impl Into<String>) -> Self {
        CliError::Config(message.into())
    }

    /// 2 for configuration problems, 3 for data problems, 4 for model failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) => match e.category() {
                ErrorCategory::Config => 2,
                ErrorCategory::Data => 3,
                ErrorCategory::Model => 4,
            },
            CliError::Config(_) => 2,
            CliError::File { .. } | CliError::Row { .. } | CliError::Missing(_) => 3,
        }
    }
}
