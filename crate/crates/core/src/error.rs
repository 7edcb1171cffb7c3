//! Crate-wide error type.

use std::fmt;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Malformed corpus input, with the 1-based line number where it occurred.
    Parse {
        line: usize,
        message: String,
    },
    /// A field or label violated a documented precondition.
    Invalid(String),
    /// Checkpoint or vocabulary file could not be read or failed validation.
    Checkpoint(String),
    /// Training aborted (for example a NaN gradient).
    Training(String),
    Io(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Parse { line, message } => write!(f, "line {line}: {message}"),
            Error::Invalid(msg) => write!(f, "{msg}"),
            Error::Checkpoint(msg) => write!(f, "checkpoint: {msg}"),
            Error::Training(msg) => write!(f, "training: {msg}"),
            Error::Io(msg) => write!(f, "io: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}
