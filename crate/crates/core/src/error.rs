use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("numerical blow-up: {0}")]
    BlowUp(String),

    #[error("malformed operator term: {0}")]
    MalformedOperator(String),

    #[error("raw moment order {order} exceeds cap {cap}")]
    OrderOverflow { order: u32, cap: u32 },

    #[error("dual table has no usable paths")]
    NoUsablePaths,

    #[error("incompatible dual tables: {0}")]
    IncompatibleTables(String),

    #[error("truncated path fraction {fraction:.3e} exceeds threshold {threshold:.3e}")]
    Truncation { fraction: f64, threshold: f64 },

    #[error("estimate unusable: {0}")]
    EstimateUnusable(String),

    #[error("failed to load table: {0}")]
    TableLoad(String),

    #[error("misaligned series: {0}")]
    Misaligned(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Numerical failures (blow-ups, truncation, unusable estimates) as
    /// opposed to bad input or configuration.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::BlowUp(_)
                | Error::Truncation { .. }
                | Error::EstimateUnusable(_)
                | Error::OrderOverflow { .. }
                | Error::NoUsablePaths
        )
    }
}

pub(crate) fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}
