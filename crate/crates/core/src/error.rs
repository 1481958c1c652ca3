use std::path::PathBuf;

use crate::catalog::CorpusScope;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parse error in {locus}: {message}")]
    Parse { locus: String, message: String },

    #[error("invalid record `{id}`: {reason}")]
    Validation { id: String, reason: String },

    #[error("unknown entity `{0}`")]
    UnknownEntity(String),

    #[error("cannot build an index over an empty corpus")]
    EmptyCorpus,

    #[error("corpus scope mismatch: expected {expected}, found {found}")]
    ScopeMismatch {
        expected: CorpusScope,
        found: CorpusScope,
    },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("embedding provider failed after {retries} retries (status {status:?}): {message}")]
    Provider {
        status: Option<u16>,
        retries: u32,
        message: String,
    },

    #[error("credential environment variable `{0}` is not set")]
    CredentialMissing(String),

    #[error("relevant set is empty")]
    EmptyRelevantSet,

    #[error("cutoff k must be at least 1")]
    InvalidCutoff,

    #[error("question `{question_id}` step {step_index} references unknown id `{id}`")]
    DanglingReference {
        question_id: String,
        step_index: usize,
        id: String,
    },

    #[error("{kind} file has format `{found}`, expected `{expected}`")]
    FormatVersion {
        kind: &'static str,
        expected: String,
        found: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn json(locus: impl Into<String>, err: serde_json::Error) -> Self {
        let locus = locus.into();
        let locus = if err.line() > 0 {
            format!("{locus} (line {}, column {})", err.line(), err.column())
        } else {
            locus
        };
        Error::Parse {
            locus,
            message: err.to_string(),
        }
    }
}
