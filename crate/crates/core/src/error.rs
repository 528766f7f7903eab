use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("mode {mode} out of range for a {order}-way tensor")]
    ModeOutOfRange { mode: usize, order: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("rank {rank} out of range for mode {mode} (allowed 1..={max})")]
    RankOutOfRange {
        mode: usize,
        rank: usize,
        max: usize,
    },

    #[error("index {index:?} out of range for dims {dims:?}")]
    IndexOutOfRange { index: Vec<usize>, dims: Vec<usize> },

    #[error("no defined cells to measure")]
    EmptyDefinedSet,

    #[error("empty domain: the validity mask has no defined cells")]
    EmptyDomain,

    #[error("non-finite value at linear index {0}")]
    NonFinite(usize),

    #[error("inconsistent mask: cell ({i}, {j}) is missing at some depth/time levels but defined at others")]
    InconsistentMask { i: usize, j: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("zero denominator in compression ratio")]
    ZeroDenominator,

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("manifest: {0}")]
    Manifest(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
