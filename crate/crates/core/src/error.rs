use std::path::PathBuf;

use thiserror::Error;

use crate::backend::BackendError;
use crate::report::ValidationIssue;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid image: {0}")]
    Image(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },

    #[error("sample {sample_id}: gold disease {recorded} disagrees with rule table ({expected})")]
    RuleInconsistency {
        sample_id: String,
        recorded: String,
        expected: String,
    },

    #[error("missing {0} split")]
    MissingSplit(&'static str),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("zero-norm embedding has no direction")]
    ZeroNorm,

    #[error("unknown concept: {0}")]
    UnknownConcept(String),

    #[error("artifact was built for encoder {found}, current encoder is {expected}")]
    EncoderMismatch { expected: String, found: String },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error(transparent)]
    Backend(#[from] BackendError),

    #[error("report rejected: {0}")]
    Report(#[from] ValidationIssue),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
