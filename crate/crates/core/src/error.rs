use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed event row. `row` is the 1-based data row (header excluded).
    #[error("parse error at row {row}: {msg}")]
    Parse { row: usize, msg: String },

    #[error("event at row {row} has timestamp {ts} earlier than the previous row ({prev})")]
    OutOfOrder { row: usize, ts: f64, prev: f64 },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("split error: {0}")]
    Split(String),

    #[error("temporal leakage: negative interval {delta_t} (history must precede the query)")]
    Leakage { delta_t: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("sampling error: {0}")]
    Sampling(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}
