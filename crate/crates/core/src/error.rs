use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("parameter `{field}` = {value} is out of range: {expected}")]
    Range {
        field: &'static str,
        value: f64,
        expected: &'static str,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate denominator: {0}")]
    DegenerateDenominator(String),

    #[error("no feasible point satisfies the constraint")]
    NoFeasiblePoint,

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, LabError>;

pub(crate) fn range_err(field: &'static str, value: f64, expected: &'static str) -> LabError {
    LabError::Range {
        field,
        value,
        expected,
    }
}
