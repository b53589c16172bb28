//! Error types shared across the toolkit.

use std::path::PathBuf;

/// Coarse error class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad or inconsistent configuration (exit code 2).
    Config,
    /// Backend transport or capability failure (exit code 3).
    Backend,
    /// Data, schema, or domain failure (exit code 4).
    Data,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("schema error in {path} line {line}: {reason}")]
    Schema {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("label mapping error: no rule for label {label:?}")]
    Mapping { label: String },

    #[error("role violation: corpus {corpus:?} is reserved for substitute training")]
    RoleViolation { corpus: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("leakage: sample source {source_id:?} is not on the {side} side")]
    Leakage { source_id: String, side: String },

    #[error("index error: position {position} out of range for {len} tokens")]
    Index { position: usize, len: usize },

    #[error("backend {backend:?} does not support {op}")]
    Capability { backend: String, op: String },

    #[error("backend transport error: {0}")]
    Transport(String),

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("cross-validation error in {fold}: {reason}")]
    CvFold { fold: String, reason: String },

    #[error("composition error: {0}")]
    Composition(String),

    #[error("completeness error: missing {missing} for generator {generator:?}")]
    Completeness { generator: String, missing: String },

    #[error("equalization error: {0}")]
    Equalization(String),

    #[error("lineage error: sample source {source_id:?} cannot be resolved")]
    Lineage { source_id: String },

    #[error("resource error: {0}")]
    Resource(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("stage {stage:?} failed on document {doc:?}: {source}")]
    Stage {
        stage: String,
        doc: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) => ErrorClass::Config,
            Error::Capability { .. } | Error::Transport(_) => ErrorClass::Backend,
            Error::Stage { source, .. } => source.class(),
            _ => ErrorClass::Data,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
