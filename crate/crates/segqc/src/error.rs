//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, SegQcError>;

#[derive(Debug, Error)]
pub enum SegQcError {
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch { expected: Vec<usize>, got: Vec<usize> },

    #[error("class hierarchies differ between operands")]
    HierarchyMismatch,

    #[error("invalid hierarchy: {0}")]
    InvalidHierarchy(String),

    #[error("voxel value {value} is not a declared base label")]
    UndeclaredLabel { value: u8 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("quality bin {bin} ([{lo:.1}, {hi:.1})) is empty; generate more data for this range")]
    EmptyBin { bin: usize, lo: f64, hi: f64 },

    #[error("Pearson correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("input spatial shape {shape:?} not divisible by total downsampling {required:?}; pad to the next multiple")]
    IndivisibleShape { shape: Vec<usize>, required: Vec<usize> },

    #[error("training diverged (non-finite loss) at epoch {epoch}, step {step}")]
    Divergence { epoch: usize, step: usize },

    #[error("checkpoint mismatch: {0}")]
    CheckpointMismatch(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl SegQcError {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        SegQcError::Io { path: path.into(), source }
    }

    /// Process exit code for the CLI: 2 bad config, 3 data error, 4 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            SegQcError::InvalidConfig(_)
            | SegQcError::InvalidHierarchy(_)
            | SegQcError::CheckpointMismatch(_) => 2,
            SegQcError::ShapeMismatch { .. }
            | SegQcError::HierarchyMismatch
            | SegQcError::UndeclaredLabel { .. }
            | SegQcError::EmptyBin { .. }
            | SegQcError::IndivisibleShape { .. }
            | SegQcError::Data(_)
            | SegQcError::Io { .. }
            | SegQcError::Json(_) => 3,
            SegQcError::Divergence { .. } | SegQcError::UndefinedCorrelation(_) => 4,
        }
    }
}
