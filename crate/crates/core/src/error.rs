use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix must have at least one row and one column (got {rows}x{cols})")]
    EmptyMatrix { rows: usize, cols: usize },

    #[error("non-finite entry at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("matrix has numerical rank zero; leverage scores are undefined")]
    ZeroRank,

    #[error("SVD did not converge")]
    SvdNotConverged,

    #[error("spectral norm iteration did not converge after {iterations} iterations (best estimate {estimate})")]
    SpectralNormNotConverged { estimate: f64, iterations: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("sampling draw selected no rows; redraw with a different seed")]
    EmptyDraw,

    #[error("invalid count {value} at position {index}: counts must be non-negative integers")]
    InvalidCount { index: usize, value: f64 },

    #[error("operation requires the {expected} family")]
    FamilyMismatch { expected: &'static str },

    #[error("fitting variable {index} failed: {source}")]
    Variable {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("non-finite value encountered: {0}")]
    NonFiniteValue(String),

    #[error("size overflow: {0}")]
    SizeOverflow(String),

    #[error("parse error at row {row}, column {col}: {message}")]
    Parse {
        row: usize,
        col: usize,
        message: String,
    },

    #[error(
        "experiment cell (fold {fold}, method {method}, fraction {fraction}) failed: {source}"
    )]
    Experiment {
        fold: usize,
        method: String,
        fraction: f64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
