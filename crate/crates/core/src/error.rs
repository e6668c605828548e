use std::path::PathBuf;

use thiserror::Error;

use crate::backends::BackendError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid ratio `{0}`")]
    InvalidRatio(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("WER is undefined for an empty reference")]
    EmptyReference,

    #[error("empty corpus: no reference words to score")]
    EmptyCorpus,

    #[error("alignment table line {line}: {reason}")]
    AlignmentTable { line: usize, reason: String },

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("duplicate record id `{0}`")]
    DuplicateId(String),

    #[error("record `{id}`: gold miscues disagree with the alignment of read text and gold transcript")]
    InconsistentGold { id: String },

    #[error("prediction and gold record ids differ (missing from predictions: {missing:?}; unexpected: {unexpected:?})")]
    KeyMismatch {
        missing: Vec<String>,
        unexpected: Vec<String>,
    },

    #[error("LLM response has no fenced block")]
    NoFencedBlock,

    #[error("LLM alignment REF column does not match the read text")]
    RefMismatch,

    #[error("prompt of {prompt_tokens} tokens plus {max_tokens} completion tokens exceeds the context limit of {limit}")]
    ContextOverflow {
        prompt_tokens: usize,
        max_tokens: usize,
        limit: usize,
    },

    #[error("template: {0}")]
    Template(String),

    #[error("{failed} of {total} records failed")]
    TooManyFailures { failed: usize, total: usize },

    #[error(transparent)]
    Backend(#[from] BackendError),

    #[error("{path}: {source}")]
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
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
