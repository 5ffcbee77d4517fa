//! Error type shared across the toolkit.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied value violates an operation's contract.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A line of an input file could not be parsed. `row` is 1-based.
    #[error("parse error at row {row}: {msg}")]
    Parse { row: usize, msg: String },

    /// Input data is well-formed but semantically invalid.
    #[error("invalid data: {0}")]
    InvalidData(String),

    /// Not enough observations to fit or score.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// A persisted store is corrupt. `offset` is the byte position of the
    /// first inconsistency.
    #[error("format error at byte {offset}: {msg}")]
    Format { offset: u64, msg: String },

    /// A shadow run failed after its one retry.
    #[error("model {index} failed after retry: {msg}")]
    RunFailed { index: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid_argument(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn insufficient_data(msg: impl Into<String>) -> Self {
        Error::InsufficientData(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
