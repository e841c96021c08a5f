use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{name}: input is not valid UTF-8 text")]
    Decode { name: String },

    #[error("{name}:{line}: {message}")]
    Format {
        name: String,
        line: usize,
        message: String,
    },

    #[error("{name}: unsupported format version {found} (expected {expected})")]
    Version {
        name: String,
        found: i64,
        expected: i64,
    },

    #[error("{name}: conflicting records for {id} at lines {first} and {second}")]
    Conflict {
        name: String,
        id: String,
        first: usize,
        second: usize,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("unknown predicate `{0}`")]
    UnknownPredicate(String),

    #[error("literal object not allowed for predicate `{0}`")]
    LiteralPosition(String),

    #[error("invalid entity id `{0}`")]
    InvalidId(String),

    #[error("graph builder already finalized")]
    Finalized,

    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },

    #[error("slot `{slot}`: {message}")]
    Slot { slot: String, message: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn format(name: &str, line: usize, message: impl Into<String>) -> Self {
        Error::Format {
            name: name.to_string(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
