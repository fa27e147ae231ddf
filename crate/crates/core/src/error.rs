use std::fmt;

/// Everything that can go wrong inside the engine.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("resource limit exceeded: {0}")]
    Resource(String),
    #[error("inconsistent database: {0}")]
    Inconsistent(String),
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("parse error at {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn validation(msg: impl fmt::Display) -> Self {
        Error::Validation(msg.to_string())
    }

    pub(crate) fn schema(msg: impl fmt::Display) -> Self {
        Error::Schema(msg.to_string())
    }

    pub(crate) fn resource(msg: impl fmt::Display) -> Self {
        Error::Resource(msg.to_string())
    }

    pub(crate) fn parse(pos: usize, msg: impl fmt::Display) -> Self {
        Error::Parse { pos, msg: msg.to_string() }
    }
}
