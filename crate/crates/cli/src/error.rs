use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Rejected configuration or input before any work started.
    #[error("{0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] qcalab_core::Error),

    #[error("{failed} of {total} verification checks failed")]
    VerifyFailed { failed: usize, total: usize },
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        Self::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    /// 2 for configuration and validation, 3 for runtime and fit failures,
    /// 4 for a failed verification suite.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(qcalab_core::Error::InvalidParameter { .. }) => 2,
            CliError::Io { .. } | CliError::Core(_) => 3,
            CliError::VerifyFailed { .. } => 4,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
