use std::io;

use attrspace_core::Error as CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("{0}")]
    Usage(String),

    #[error("{0}")]
    Verification(String),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) | CliError::Core(CoreError::Io(_)) => 1,
            CliError::Core(CoreError::Divergence { .. }) => 3,
            CliError::Verification(_) => 4,
            CliError::Core(_) | CliError::Usage(_) => 2,
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        if e.is_io() {
            CliError::Io(e.into())
        } else {
            CliError::Usage(format!("invalid JSON: {e}"))
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
