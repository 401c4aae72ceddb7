use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("component build: {0}")]
    Build(String),

    #[error("corrupt component file {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },

    #[error("schema violation: {0}")]
    Schema(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("invalid configuration for `{field}`: {reason}")]
    Config { field: String, reason: String },
}

impl Error {
    pub(crate) fn corrupt(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Corrupt {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
