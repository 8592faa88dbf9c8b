use std::path::PathBuf;

/// Errors raised anywhere in the segmentation pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid structuring element size {0}")]
    InvalidElementSize(usize),
    #[error("lesion annotation is empty; coverage rate is undefined")]
    EmptyAnnotation,
    #[error("length mismatch: {what} ({left} vs {right})")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },
    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),
    #[error("metric undefined: {0}")]
    UndefinedMetric(&'static str),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("non-finite loss at epoch {epoch} (lr {lr}, sample {sample})")]
    NonFiniteLoss { epoch: usize, lr: f64, sample: usize },
    #[error("invalid config field `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },
    #[error("config parse error: {0}")]
    ConfigParse(String),
    #[error("bad file format in {path}: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("manifest error: {0}")]
    Manifest(String),
    #[error("data leakage: {0}")]
    Leakage(String),
    #[error("gradient check failed: {0}")]
    GradCheck(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
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

    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
