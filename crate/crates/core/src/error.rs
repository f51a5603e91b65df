use std::path::PathBuf;

/// Errors surfaced by every layer of the tracker, from tensor kernels up to
/// the command line.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("fully masked attention row {row}")]
    FullyMaskedRow { row: usize },

    #[error("class index {index} out of range for {classes} classes")]
    TargetOutOfRange { index: usize, classes: usize },

    #[error("token {token} is not a coordinate token (vocabulary has {bins} bins)")]
    NotACoordinate { token: usize, bins: usize },

    #[error("invalid box: {0}")]
    InvalidBox(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("unknown parameter `{0}`")]
    UnknownParam(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("malformed file {path}: {detail}")]
    Format { path: PathBuf, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }
}
