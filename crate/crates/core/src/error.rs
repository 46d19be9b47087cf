use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parameter `{0}` is frozen")]
    FrozenParameter(String),

    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),

    #[error("batch of size {0} is too small for train-mode batch normalization")]
    BatchTooSmall(usize),

    #[error("empty utterance")]
    EmptyUtterance,

    #[error("utterance has {len} tokens, limit is {limit}")]
    UtteranceTooLong { len: usize, limit: usize },

    #[error("ontology violation: {0}")]
    Ontology(String),

    #[error("unmapped term `{term}` for language `{language}`")]
    UnmappedTerm { term: String, language: String },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("training diverged at iteration {iteration}: {message}")]
    Diverged { iteration: usize, message: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}
