use thiserror::Error;

/// Errors raised across estimation, testing and simulation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("insufficient data: need at least {needed} observations, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("invalid tick series: {0}")]
    InvalidSeries(String),

    #[error("model `{model}` requires covariate `{covariate}` which is not present")]
    MissingCovariate { model: String, covariate: &'static str },

    #[error("parameter {index} = {value} outside admissible box [{lo}, {hi}]")]
    OutOfBounds { index: usize, value: f64, lo: f64, hi: f64 },

    #[error("parameter vector has length {got}, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("MA(1) kernel is not positive definite (s = {s:e}, a2 = {a2:e})")]
    IndefiniteKernel { s: f64, a2: f64 },

    #[error("optimizer did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("every coordinate of the optimum lies on the boundary of the parameter box")]
    BoundarySolution,

    #[error("window of length {window} does not fit in {available} returns")]
    WindowTooLarge { window: usize, available: usize },

    #[error("asymptotic variance estimate must be positive, got {0:e}")]
    DegenerateVariance(f64),

    #[error("proportion of explained variance is undefined (zero explicative part and zero residual variance)")]
    Undefined,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("empty input file")]
    EmptyFile,

    #[error("io error: {0}")]
    Io(String),

    #[error("study cell `{cell}` degenerate: {failed} of {total} replications failed")]
    StudyDegenerate { cell: String, failed: usize, total: usize },
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
