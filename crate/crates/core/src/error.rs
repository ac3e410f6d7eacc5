//! Error types shared across the workbench.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on an argument was violated.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A binary file did not match its expected format.
    #[error("format error: {0}")]
    Format(String),

    /// Two inputs that must agree (e.g. image and label counts) do not.
    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// A computation produced or received a non-finite value.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A removal stream was fed an invalid request.
    #[error("stream error at request {position}: {message}")]
    Stream { position: usize, message: String },

    /// Not enough surviving same-class points to build a replay batch.
    #[error("replay error: {0}")]
    Replay(String),
}

impl Error {
    pub fn invalid_argument(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
}
