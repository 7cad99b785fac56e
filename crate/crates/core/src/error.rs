use thiserror::Error;

use crate::model::SubflowId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("sub-flow {0} not found")]
    NotFound(SubflowId),

    #[error("a live sub-flow already uses tuple {0}")]
    AlreadyExists(String),

    #[error("sub-flow id space exhausted")]
    IdsExhausted,

    #[error("validation error: {0}")]
    Validation(String),

    #[error("scenario syntax error at line {line}: {message}")]
    Syntax { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}
