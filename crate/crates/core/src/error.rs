use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("degenerate predictor dimension {dim}: all values equal")]
    DegenerateDimension { dim: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("reciprocal temperature {0} outside [0, 1]")]
    GammaOutOfRange(f64),
    #[error("all particle weights are zero or non-finite")]
    DegenerateWeights,
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    #[error("bridging did not reach gamma = 1 within {0} steps")]
    NonConvergence(usize),
    #[error("split center leaves the unit cube")]
    OutOfCube,
    #[error("checkpoint version mismatch: found {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
