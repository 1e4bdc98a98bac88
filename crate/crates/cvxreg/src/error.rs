use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid flag: {0}")]
    InvalidFlag(String),
    #[error("{0}")]
    Solver(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Self::Format {
            path: path.into(),
            message: message.to_string(),
        }
    }

    pub fn invalid(message: impl ToString) -> Self {
        Self::InvalidFlag(message.to_string())
    }

    /// 2 for validation errors, 3 for solver non-convergence, 4 for I/O and malformed files.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::InvalidFlag(_) => 2,
            Self::Solver(_) => 3,
            Self::Io { .. } | Self::Format { .. } => 4,
        }
    }
}
