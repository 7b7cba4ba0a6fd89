use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("malformed {what}: {message}")]
    Format { what: &'static str, message: String },

    #[error("invalid structure: {0}")]
    Structure(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("optimization failed: {0}")]
    Optimization(String),
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    /// Errors caused by unreadable or malformed input, as opposed to
    /// errors raised while fitting or predicting.
    pub fn is_input_error(&self) -> bool {
        matches!(self, Error::Io(_) | Error::Parse { .. } | Error::Format { .. })
    }
}
