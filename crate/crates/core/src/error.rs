use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the assessment pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Record { line: usize, message: String },

    #[error("duplicate sample id `{id}` (line {line})")]
    DuplicateId { id: String, line: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("length mismatch in {context}: expected {expected}, got {actual}")]
    LengthMismatch {
        context: String,
        expected: usize,
        actual: usize,
    },

    #[error("token `{0}` is not in the vocabulary")]
    UnknownToken(String),

    #[error("token index {0} is out of vocabulary range")]
    TokenOutOfRange(usize),

    #[error("non-finite value in layer `{layer}`")]
    NonFinite { layer: &'static str },

    #[error("prompt `{prompt_id}`: {message}")]
    Rollout { prompt_id: String, message: String },

    #[error("sample ids differ between sets: {0:?}")]
    IdMismatch(Vec<String>),

    #[error("undefined metric: {0}")]
    UndefinedMetric(&'static str),

    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("transport error: {0}")]
    Transport(String),

    #[error("unexpected endpoint response: {0}")]
    Protocol(String),

    #[error("endpoint returned HTTP {status}: {body}")]
    Http { status: u16, body: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
