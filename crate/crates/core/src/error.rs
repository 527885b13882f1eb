use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter violates its declared range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The argument lies outside the domain of a closed-form expression.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("divergence at step {step}: |x| = {value:e} exceeds the overflow guard {limit:e}")]
    Divergence { step: u64, value: f64, limit: f64 },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("series too short: {0}")]
    TooShort(String),

    #[error("insufficient frequency bins in [{f_lo}, {f_hi}]: found {found}, need {needed}")]
    InsufficientBins {
        f_lo: f64,
        f_hi: f64,
        found: usize,
        needed: usize,
    },

    #[error("zero variance in {0}")]
    ZeroVariance(&'static str),

    #[error("timestamps out of order at row {row}")]
    NonMonotoneTimestamps { row: usize },

    #[error("non-positive price {price} at row {row}")]
    NonPositivePrice { row: usize, price: f64 },

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
