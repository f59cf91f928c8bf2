use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the library can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix is not positive definite: pivot {index} is {pivot:e} with jitter {jitter:e}")]
    NotPositiveDefinite { index: usize, pivot: f64, jitter: f64 },

    #[error("eigensolver did not converge (achieved residual {residual:e})")]
    ConvergenceFailure { residual: f64 },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("non-positive variance {value:e} at sample {index}")]
    NonPositiveVariance { index: usize, value: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("prediction gradient vanishes at the query point (prediction {prediction}); rigidity is infinite")]
    DegenerateGradient { prediction: f64 },

    #[error("full-parameter rigidity needs a dense {count}x{count} Hessian (limit {limit}); use the last-layer approximation")]
    TooManyParameters { count: usize, limit: usize },

    #[error("{operation} is not available for {kind} models")]
    UnsupportedModel {
        kind: &'static str,
        operation: &'static str,
    },

    #[error("loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("every regularizer in the calibration grid failed to factorize ({tried} tried)")]
    AllGridPointsFailed { tried: usize },

    #[error("quadrature unstable at xi={xi}: order {low_order} and {high_order} differ by {difference:e}")]
    QuadratureUnstable {
        xi: f64,
        low_order: usize,
        high_order: usize,
        difference: f64,
    },

    #[error("kernel argument {value} at layer {layer} leaves [-1, 1]")]
    DomainExceeded { layer: usize, value: f64 },

    #[error("root finding failed inside bracket [{lo}, {hi}]")]
    RootFindFailure { lo: f64, hi: f64 },

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("missing column: {0}")]
    MissingColumn(String),

    #[error("checksum mismatch: expected {expected}, got {actual} (quarantined at {quarantined:?})")]
    ChecksumMismatch {
        expected: String,
        actual: String,
        quarantined: PathBuf,
    },

    #[error("network error: {0}")]
    Network(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub(crate) fn ensure_len(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            found,
        })
    }
}
