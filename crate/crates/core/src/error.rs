use std::path::PathBuf;

use thiserror::Error;

use crate::volume::VoxelIndex;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("voxel {index:?} is outside grid {dims:?}")]
    OutOfBounds { index: VoxelIndex, dims: [usize; 3] },

    #[error("feature set is empty")]
    EmptyFeatureSet,

    #[error("seed value {value} lies outside [{lo}, {hi}]")]
    SeedOutsideRange { value: f64, lo: f64, hi: f64 },

    #[error("mask is empty")]
    EmptyMask,

    #[error("centerline graph has no endpoint to root the tree at")]
    NoRootCandidate,

    #[error("power-law fit needs at least 3 usable points, got {0}")]
    InsufficientData(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("grids do not match: {0}")]
    GridMismatch(String),

    #[error("phantom segments {a} and {b} intersect")]
    SelfIntersection { a: usize, b: usize },

    #[error("invalid phantom spec: {0}")]
    InvalidSpec(String),

    #[error("phantom tree does not fit the volume: {0}")]
    TreeOutOfBounds(String),

    #[error("corrupt data in {path}: {reason}")]
    CorruptData { path: PathBuf, reason: String },

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("invalid header {path}: {reason}")]
    InvalidHeader { path: PathBuf, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Name of the pipeline stage this error was raised in, if any.
    pub fn stage(&self) -> Option<&'static str> {
        match self {
            Error::Stage { stage, .. } => Some(stage),
            _ => None,
        }
    }

    /// The innermost error, with stage context stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }
}
