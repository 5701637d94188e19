use thiserror::Error;

/// Errors produced by the estimation toolkit.
#[derive(Debug, Error)]
pub enum OuError {
    #[error("parameter out of domain: {0}")]
    ParameterDomain(String),

    #[error("degenerate grid: {0}")]
    DegenerateGrid(String),

    #[error("trajectory too short: need at least {needed} points, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("constant series: lag-1 correlation is undefined")]
    ConstantSeries,

    #[error("non-finite value in trajectory at index {0}")]
    NonFinite(usize),

    #[error("optimization failed: {0}")]
    OptimizationFailed(String),

    #[error("line search failed after {0} iterations")]
    LineSearchFailed(usize),

    #[error("search direction is not a descent direction (g'p = {0})")]
    NotDescent(f64),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("activation cache does not match the model: {0}")]
    CacheMismatch(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("empty input")]
    EmptyInput,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = OuError> = std::result::Result<T, E>;
