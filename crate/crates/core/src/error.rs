use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    DimensionMismatch { op: &'static str, detail: String },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),

    #[error("unknown level `{level}` for attribute `{attribute}`")]
    UnknownLevel { attribute: String, level: String },

    #[error("missing label for visible attribute `{attribute}` (sample `{sample}`)")]
    MissingLabel { sample: String, attribute: String },

    #[error("attribute `{0}` is hidden")]
    HiddenAttribute(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("ragged vectors: sample `{id}` has {field} length {found}, expected {expected}")]
    RaggedLength {
        id: String,
        field: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("duplicate sample id `{0}`")]
    DuplicateId(String),

    #[error("unknown sample id `{0}`")]
    DanglingId(String),

    #[error("invalid edit pair {original} -> {edited}: {reason}")]
    InvalidPair {
        original: String,
        edited: String,
        reason: String,
    },

    #[error("output space mismatch: {0}")]
    SpaceMismatch(String),

    #[error("no effect estimate for pair ({sample}, {attribute}, {from} -> {to})")]
    MissingEstimate {
        sample: String,
        attribute: String,
        from: String,
        to: String,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    /// Errors caused by the arithmetic rather than by malformed input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical(_) | Error::NonFinite(_))
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn dims(op: &'static str, detail: impl Into<String>) -> Self {
        Error::DimensionMismatch {
            op,
            detail: detail.into(),
        }
    }
}
