use std::path::PathBuf;

use delay_snn_core::SnnError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] SnnError),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed checkpoint {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },

    #[error("incompatible checkpoint {path}: format version {found}, this build reads version {expected}")]
    Version { path: PathBuf, found: u32, expected: u32 },
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    /// Process exit status: 1 for usage and configuration problems, 2 for
    /// unreadable data or checkpoints, 3 when training hit a non-finite value.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(SnnError::Config(_) | SnnError::Contract(_)) => 1,
            CliError::Core(SnnError::Numeric(_)) => 3,
            CliError::Core(SnnError::Input(_) | SnnError::Ingestion { .. } | SnnError::Io { .. }) => 2,
            CliError::Io { .. } | CliError::Checkpoint { .. } | CliError::Version { .. } => 2,
        }
    }
}
