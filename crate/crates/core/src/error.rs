use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("covariance is not symmetric: entry ({row}, {col}) = {upper} but ({col}, {row}) = {lower}")]
    NotSymmetric {
        row: usize,
        col: usize,
        upper: f64,
        lower: f64,
    },

    #[error("covariance is not positive definite")]
    NotPositiveDefinite,

    #[error("invalid mixture: {0}")]
    InvalidMixture(String),

    #[error("invalid fusion rule: {0}")]
    InvalidRule(String),

    #[error("instance too large: {0}")]
    TooLarge(String),

    #[error("invalid sample bank: {0}")]
    InvalidBank(String),

    #[error("invalid labels: {0}")]
    InvalidLabels(String),

    #[error("{0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
