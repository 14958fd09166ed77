use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = TassError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum TassError {
    #[error("dimension error in {op}: {lhs:?} vs {rhs:?}")]
    Dimension {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("index error: {0}")]
    Index(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("contract error: {0}")]
    Contract(String),
    #[error("stale tape: {0}")]
    StaleTape(String),
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },
    #[error("config error: {0}")]
    Config(String),
    #[error("sample {sample}: missing file {path}")]
    MissingFile { sample: String, path: PathBuf },
    #[error("sample {sample}: answer index {answer} out of range for vocabulary of {vocab}")]
    AnswerOutOfRange {
        sample: String,
        answer: usize,
        vocab: usize,
    },
    #[error("sample {sample}: {what} has shape {found:?}, expected {expected:?}")]
    FeatureDimension {
        sample: String,
        what: String,
        found: Vec<usize>,
        expected: Vec<usize>,
    },
    #[error("sample {sample}: unknown video id {video_id}")]
    UnknownVideo { sample: String, video_id: String },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("non-finite gradient in parameter {0}")]
    NonFiniteGradient(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("seed error: {0}")]
    Seed(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl TassError {
    /// Short stable identifier, used in machine-readable CLI error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Dimension { .. } => "dimension",
            Self::Index(_) => "index",
            Self::Domain(_) => "domain",
            Self::Contract(_) => "contract",
            Self::StaleTape(_) => "stale_tape",
            Self::Format { .. } => "format",
            Self::Config(_) => "config",
            Self::MissingFile { .. } => "missing_file",
            Self::AnswerOutOfRange { .. } => "answer_out_of_range",
            Self::FeatureDimension { .. } => "feature_dimension",
            Self::UnknownVideo { .. } => "unknown_video",
            Self::Checkpoint(_) => "checkpoint",
            Self::NonFiniteGradient(_) => "non_finite_gradient",
            Self::NonFiniteLoss { .. } => "non_finite_loss",
            Self::Seed(_) => "seed",
            Self::Io { .. } => "io",
            Self::Json(_) => "json",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }
}
