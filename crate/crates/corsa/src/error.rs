//! Error type shared across the library.

use thiserror::Error;

/// Library-wide error. The three variants map onto the CLI exit codes
/// (validation = 1, numerical = 2, io = 3).
#[derive(Debug, Error)]
pub enum Error {
    /// Bad input data or configuration.
    #[error("validation error: {0}")]
    Validation(String),

    /// Numerical failure (non-positive-definite matrix, degenerate weights).
    #[error("numerical error: {0}")]
    Numerical(String),

    /// File input/output failure.
    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub fn io(msg: impl Into<String>) -> Self {
        Error::Io(msg.into())
    }

    /// Prefix the message with extra context, keeping the variant.
    pub fn context(self, ctx: &str) -> Self {
        match self {
            Error::Validation(m) => Error::Validation(format!("{ctx}: {m}")),
            Error::Numerical(m) => Error::Numerical(format!("{ctx}: {m}")),
            Error::Io(m) => Error::Io(format!("{ctx}: {m}")),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
