use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("malformed row {row}, column {column}: {detail}")]
    MalformedRow {
        row: usize,
        column: String,
        detail: String,
    },

    #[error("missingness indicator must be 0 or 1 (row {row}, value {value})")]
    NonBinaryIndicator { row: usize, value: String },

    #[error("column {0:?} not found in header")]
    MissingColumn(String),

    #[error("constant covariate in dimension {dim}: zero range")]
    ConstantCovariate { dim: usize },

    #[error("no complete cases: all responses are missing")]
    NoCompleteCases,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("nonpositive bandwidth {0}")]
    NonpositiveBandwidth(f64),

    #[error("singular local design at evaluation point {point:?}")]
    SingularDesign { point: Vec<f64> },

    #[error("all cross-validation grid values infeasible")]
    CvInfeasible,

    #[error("degenerate detection function: omega is numerically constant")]
    DegenerateDetection,

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("sample too small: {observed} observed rows, need at least {required}")]
    SampleTooSmall { observed: usize, required: usize },

    #[error("mar_mode is `full` but responses are missing; use `auto` or `complete_case`")]
    MissingResponsesInFullMode,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("bootstrap failed: {0}")]
    Bootstrap(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}
