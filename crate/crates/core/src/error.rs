use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown task `{0}`")]
    UnknownTask(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("label out of range: {label} (label space has {n_labels} labels)")]
    LabelOutOfRange { label: usize, n_labels: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid config field `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("insufficient pool for speaker `{speaker}`, emotion `{emotion}`: need {needed} {side}, have {available}")]
    InsufficientPool {
        speaker: String,
        emotion: String,
        side: &'static str,
        needed: usize,
        available: usize,
    },

    #[error("unknown speaker `{0}`")]
    UnknownSpeaker(String),

    #[error("unknown emotion `{0}`")]
    UnknownEmotion(String),

    #[error("malformed {what} at {path}: {reason}")]
    Format {
        what: &'static str,
        path: PathBuf,
        reason: String,
    },

    #[error("corpus `{name}` not found at {path} (run gen-data first)")]
    MissingCorpus { name: String, path: PathBuf },

    #[error("checkpoint for config {config_id} does not match the plan: {reason}")]
    CheckpointMismatch { config_id: usize, reason: String },

    #[error("missing checkpoint for config {config_id} at {path}")]
    MissingCheckpoint { config_id: usize, path: PathBuf },

    #[error("store mismatch: store was written for run {store}, current run is {current} (plan, data, checkpoints or fine-tuning settings changed; use a fresh store)")]
    StoreMismatch { store: String, current: String },

    #[error("no ok records")]
    NoOkRecords,

    #[error("no baseline records for k={k}, speaker `{speaker}`, emotion `{emotion}`")]
    MissingBaseline { k: usize, speaker: String, emotion: String },

    #[error("missing records for config [{config}] at k={k}, speaker `{speaker}`, emotion `{emotion}`")]
    MissingConfig {
        config: String,
        k: usize,
        speaker: String,
        emotion: String,
    },

    #[error("nothing to write: {0} report has no rows")]
    EmptyReport(&'static str),

    #[error("output directory {0} exists and is not empty (pass --force to overwrite)")]
    OutputExists(PathBuf),

    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(what: &'static str, path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            what,
            path: path.into(),
            reason: reason.into(),
        }
    }
}
