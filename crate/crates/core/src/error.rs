use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("point {point:?} lies outside the domain")]
    OutsideDomain { point: [f64; 2] },

    #[error("duplicate location {0:?}")]
    DuplicatePoint([f64; 2]),

    #[error("duplicate time stamp {0}")]
    DuplicateTime(f64),

    #[error("intensity {value} exceeds the envelope {bound} at {point:?}")]
    EnvelopeViolation { point: [f64; 2], value: f64, bound: f64 },

    #[error("matrix is not positive definite (pivot {pivot}, value {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("structural error: {0}")]
    Structure(String),

    #[error("problem too large: {0}")]
    TooLarge(String),

    #[error("sampler gave up after {0} iterations")]
    IterationCap(usize),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parameter(_) => "parameter",
            Error::OutsideDomain { .. } => "outside_domain",
            Error::DuplicatePoint(_) => "duplicate_point",
            Error::DuplicateTime(_) => "duplicate_time",
            Error::EnvelopeViolation { .. } => "envelope_violation",
            Error::NotPositiveDefinite { .. } => "not_positive_definite",
            Error::Dimension { .. } => "dimension",
            Error::Structure(_) => "structure",
            Error::TooLarge(_) => "too_large",
            Error::IterationCap(_) => "iteration_cap",
            Error::Parse { .. } => "parse",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param(msg: impl Into<String>) -> Error {
    Error::Parameter(msg.into())
}
