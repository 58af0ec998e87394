use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the scan path pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("model format version mismatch: file has version {found}, expected version {expected}")]
    Version { found: String, expected: u32 },

    #[error("malformed model: {0}")]
    ModelFormat(String),

    #[error("generation error: {0}")]
    Generation(String),

    #[error("feature error: {0}")]
    Feature(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
