use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid user-supplied values (hierarchy, counts, tolerances).
    #[error("validation error: {0}")]
    Validation(String),

    /// A configuration that is well-formed but cannot be executed.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("lookup error: {0}")]
    Lookup(String),

    #[error("integrity error: {0}")]
    Integrity(String),

    /// An operation was invoked in a state that does not allow it.
    #[error("contract error: {0}")]
    Contract(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) | Error::Integrity(_) | Error::Contract(_) => 1,
            _ => 2,
        }
    }
}
