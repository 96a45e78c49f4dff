use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CectError> = std::result::Result<T, E>;

/// Errors produced anywhere in the pipeline.
///
/// Variants are grouped by [`ErrorClass`] so that callers (the CLI in
/// particular) can map them to stable exit codes.
#[derive(Debug, Error)]
pub enum CectError {
    #[error("dimension error in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("invalid parameter `{name}`: {detail}")]
    Parameter { name: String, detail: String },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("non-finite value produced by node {node} ({op})")]
    NonFinite { node: usize, op: &'static str },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("missing parameter `{0}`")]
    MissingParameter(String),

    #[error("ingestion error at {path}: {detail}")]
    Ingestion { path: PathBuf, detail: String },

    #[error("split error: {0}")]
    Split(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serialization(String),
}

/// Coarse error classification.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad configuration or input that fails validation.
    Validation,
    /// Numeric or runtime failure during computation.
    Runtime,
    /// Filesystem or decoding failure.
    Io,
}

impl CectError {
    pub fn class(&self) -> ErrorClass {
        match self {
            CectError::Config(_) | CectError::Validation(_) | CectError::Parameter { .. } | CectError::Split(_) => {
                ErrorClass::Validation
            }
            CectError::Io { .. }
            | CectError::Ingestion { .. }
            | CectError::Checkpoint(_)
            | CectError::Serialization(_) => ErrorClass::Io,
            CectError::Dimension { .. }
            | CectError::ShapeMismatch { .. }
            | CectError::Contract(_)
            | CectError::NonFinite { .. }
            | CectError::Numeric(_)
            | CectError::MissingParameter(_) => ErrorClass::Runtime,
        }
    }

    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        CectError::Dimension {
            op,
            detail: detail.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CectError::Io {
            path: path.into(),
            source,
        }
    }
}
