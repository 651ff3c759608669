//! Crate-wide error type.

use std::fmt;
use std::io;

/// Errors produced by this crate.
#[derive(Debug)]
pub enum Error {
    /// A caller-supplied value violated a precondition.
    InvalidInput(String),
    /// A text input (LIBSVM, CSV, config) could not be parsed.
    Parse {
        line: usize,
        message: String,
    },
    /// A training or experiment configuration is inconsistent.
    Config(String),
    /// An internal invariant failed; indicates a bug, not bad input.
    Internal(String),
    Io(io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            Error::Parse { line, message } => write!(f, "parse error at line {line}: {message}"),
            Error::Config(msg) => write!(f, "config error: {msg}"),
            Error::Internal(msg) => write!(f, "internal error: {msg}"),
            Error::Io(err) => write!(f, "io error: {err}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(err) => Some(err),
            _ => None,
        }
    }
}

impl From<io::Error> for Error {
    fn from(err: io::Error) -> Self {
        Error::Io(err)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
