use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("coefficients are not stationary: rho(A)*rho(B) = {product:.6} >= 1")]
    NonStationary { product: f64 },

    #[error("rank parameter {name}={value} outside 1..={max}")]
    RankBounds {
        name: &'static str,
        value: usize,
        max: usize,
    },

    #[error("insufficient observations for {context}: need at least {needed} frames, got {got}")]
    InsufficientData {
        context: &'static str,
        needed: usize,
        got: usize,
    },

    #[error("regressor Gram matrix has effective rank 0 ({0})")]
    DegenerateGram(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("ingestion failed: {0}")]
    Ingest(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
