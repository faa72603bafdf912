use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A layer would produce a spatial output smaller than 1x1.
    #[error("layer {layer} underflows: {height}x{width} input cannot fit window {window}")]
    ShapeUnderflow {
        layer: usize,
        height: usize,
        width: usize,
        window: usize,
    },
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid chromosome: {0}")]
    InvalidChromosome(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("loss is not finite ({0})")]
    NonFiniteLoss(f64),
    #[error("individual {0} has no fitness record")]
    UnevaluatedIndividual(u64),
    #[error("need at least {needed} candidates, got {got}")]
    InsufficientCandidates { needed: usize, got: usize },
    #[error("mating pool size {0} is not a positive even number")]
    OddPoolSize(usize),
    #[error("malformed data: {0}")]
    Format(String),
    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("checkpoint format version {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("checkpoint checksum mismatch")]
    Checksum,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
