use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("non-finite gradient in parameter `{name}`")]
    NonFiniteGradient { name: String },

    #[error("non-finite loss: {0}")]
    NonFiniteLoss(String),

    /// Training produced a non-finite loss. `index` is the epoch or step at
    /// which it was first observed.
    #[error("{stage} diverged at {unit} {index}")]
    Diverged {
        stage: &'static str,
        unit: &'static str,
        index: usize,
    },

    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("checksum mismatch in {}", .0.display())]
    Checksum(PathBuf),

    #[error("corrupt registry index {}: line {line}: {message}", path.display())]
    CorruptIndex {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate model id `{0}`")]
    DuplicateId(String),

    #[error("fleet requirement infeasible: required {required_kw} kW, at most {achievable_kw} kW available")]
    Infeasible { required_kw: f64, achievable_kw: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
