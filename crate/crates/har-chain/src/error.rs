//! Crate-wide error type.
//!
//! Errors carry enough context to point at the offending row, fold, or
//! pipeline stage. [`Error::is_config`] distinguishes configuration mistakes
//! (CLI exit code 2) from runtime failures (exit code 1).

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("missing mandatory column `{name}` in {path}")]
    MissingColumn { name: String, path: PathBuf },

    #[error("non-monotonic timestamp at row {row}")]
    NonMonotonicTimestamp { row: usize },

    #[error("label `{label}` not in label map at row {row}")]
    UnknownLabel { label: String, row: usize },

    #[error("unparseable value `{value}` in column `{column}` at row {row}")]
    BadValue {
        value: String,
        column: String,
        row: usize,
    },

    #[error("subject id changes from `{expected}` to `{found}` at row {row}")]
    SubjectMismatch {
        expected: String,
        found: String,
        row: usize,
    },

    #[error("empty recording: {path} has no data rows")]
    EmptyRecording { path: PathBuf },

    #[error("no recordings found")]
    NoRecordings,

    #[error("channel sets differ across recordings: {0}")]
    ChannelMismatch(String),

    #[error("label maps differ across recordings")]
    LabelMapMismatch,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NonScalarBackward { shape: Vec<usize> },

    #[error("backward graph already consumed; rebuild the graph before calling backward again")]
    GraphConsumed,

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    TrainDiverged { epoch: usize, batch: usize },

    #[error("invalid argument: {0}")]
    InvalidArg(String),

    #[error("fold {fold}: {source}")]
    Fold {
        fold: String,
        #[source]
        source: Box<Error>,
    },

    #[error("stage `{stage}`: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArg(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Attach a fold id to an error bubbling out of a cross-validation fold.
    pub fn in_fold(self, fold: impl Into<String>) -> Self {
        Error::Fold {
            fold: fold.into(),
            source: Box::new(self),
        }
    }

    /// Attach a pipeline stage name.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// True for errors that should map to CLI exit code 2.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}
