use thiserror::Error;

/// Coarse error classes, used by the command-line front end to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Io,
    Validation,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch for {what}: expected {expected}, got {got}")]
    Shape {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid input data: {0}")]
    InvalidData(String),

    #[error("csv parse error at row {row}, column '{column}': {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("no features left: every score is below the threshold {threshold}")]
    EmptyModel { threshold: f64 },

    #[error("dense size guard exceeded: {rows}x{cols} > {limit}x{limit}")]
    SizeGuard {
        rows: usize,
        cols: usize,
        limit: usize,
    },

    #[error("kernel width {sigma:e} is below {min_sigma:.3e}, the narrowest the {grid}-point coefficient grid resolves for these nodes; use a larger sigma or a finer profile")]
    Unresolved { sigma: f64, min_sigma: f64, grid: usize },

    #[error("transition polynomial system is ill-conditioned (cond ~ {condition:.3e}) for smoothness degree {degree}")]
    Conditioning { degree: usize, condition: f64 },

    #[error("numerical breakdown in conjugate gradient at iteration {iteration}: {reason}")]
    Breakdown { iteration: usize, reason: String },

    #[error("dense factorization failed: {0}")]
    Factorization(String),

    #[error("malformed model file: {0}")]
    Model(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Io(_) => ErrorClass::Io,
            Error::Csv(e) if e.is_io_error() => ErrorClass::Io,
            Error::Conditioning { .. } | Error::Breakdown { .. } | Error::Factorization(_) => {
                ErrorClass::Numerical
            }
            _ => ErrorClass::Validation,
        }
    }

    pub(crate) fn shape(what: &'static str, expected: usize, got: usize) -> Self {
        Error::Shape {
            what,
            expected,
            got,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
