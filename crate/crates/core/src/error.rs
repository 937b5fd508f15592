use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the simulation, training and ingestion code.
#[derive(Debug, Error)]
pub enum SnnError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("ingestion error in {path} at byte offset {offset}: {reason}")]
    Ingestion {
        path: PathBuf,
        offset: usize,
        reason: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, SnnError>;

pub(crate) fn config(msg: impl Into<String>) -> SnnError {
    SnnError::Config(msg.into())
}

pub(crate) fn contract(msg: impl Into<String>) -> SnnError {
    SnnError::Contract(msg.into())
}
