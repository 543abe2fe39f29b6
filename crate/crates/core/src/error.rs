use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: line {line}: {message}")]
    MalformedLine {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {message}")]
    BadFormat { path: PathBuf, message: String },

    #[error("duplicate doc_id {0}")]
    DuplicateDocId(String),

    #[error("unknown sentence_id {0}")]
    UnknownSentence(String),

    #[error("unknown item_id {0}")]
    UnknownItem(String),

    #[error("unregistered query field {0}")]
    UnregisteredField(String),

    #[error("no weight configured for query field {0}")]
    MissingFieldWeight(String),

    #[error("empty query")]
    EmptyQuery,

    #[error("empty index")]
    EmptyIndex,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("vector has zero norm")]
    ZeroVector,

    #[error("no example sentences selected")]
    NoExamples,

    #[error("embedding provider failed on sentence {sentence_id}: {message}")]
    ProviderFailed {
        sentence_id: String,
        message: String,
    },

    #[error("embedding service unreachable at {endpoint}: {message} (check that the service is running and retry)")]
    ProviderUnreachable { endpoint: String, message: String },

    #[error("no precomputed embedding for sentence {0}")]
    MissingEmbedding(String),

    #[error("session {0} not found")]
    SessionNotFound(String),

    #[error("session frozen: {0} has been exported")]
    SessionFrozen(String),

    #[error("{0} narrative must not be empty")]
    EmptyNarrative(&'static str),

    #[error("search terms must not be empty")]
    EmptySearchTerms,

    #[error("bad judgment level {0:?}")]
    BadJudgmentLevel(String),

    #[error("empty run")]
    EmptyRun,

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

    pub(crate) fn malformed(path: impl Into<PathBuf>, line: usize, message: impl ToString) -> Self {
        Error::MalformedLine {
            path: path.into(),
            line,
            message: message.to_string(),
        }
    }
}
