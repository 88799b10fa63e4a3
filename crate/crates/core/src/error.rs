use std::fmt;

/// Errors produced by parsers and pipeline operations.
#[derive(Debug)]
pub enum Error {
    /// Malformed text input. `line` is 1-based within the offending stream.
    Parse { line: usize, message: String },
    /// Arguments that violate an operation's contract.
    InvalidInput(String),
    /// Numerical failure such as a singular system or non-finite data.
    Numeric(String),
    /// An internal consistency check failed.
    Internal(String),
}

impl Error {
    pub fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidInput(message.into())
    }

    pub fn numeric(message: impl Into<String>) -> Self {
        Error::Numeric(message.into())
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Error::Internal(message.into())
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Parse { line, message } => write!(f, "line {line}: {message}"),
            Error::InvalidInput(m) => write!(f, "invalid input: {m}"),
            Error::Numeric(m) => write!(f, "numeric error: {m}"),
            Error::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

impl std::error::Error for Error {}

pub type Result<T> = std::result::Result<T, Error>;
