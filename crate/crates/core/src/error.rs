use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    /// An operation was called in the wrong lifecycle phase or with
    /// arguments that violate its contract.
    #[error("usage error: {0}")]
    Usage(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("scorer transport error (batch ids {ids:?}): {message}")]
    Transport { ids: Vec<u64>, message: String },

    #[error("dictionary mismatch: index was built with {index} but the supplied dictionary is {dictionary}")]
    DictionaryMismatch { index: String, dictionary: String },
}

impl Error {
    pub(crate) fn parse(source_name: &str, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            source_name: source_name.to_string(),
            line,
            message: message.into(),
        }
    }
}
