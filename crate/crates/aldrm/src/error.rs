use thiserror::Error;

/// Errors produced by model construction, data handling and sampling.
#[derive(Debug, Error)]
pub enum Error {
    /// A distribution or model parameter is outside its support.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A model specification is internally inconsistent.
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),

    /// A dataset violates the longitudinal-data invariants.
    #[error("invalid dataset: {0}")]
    InvalidData(String),

    /// Design construction failed (unknown covariate, empty data, ...).
    #[error("design error: {0}")]
    Design(String),

    /// The sampler hit a numerical failure (non-finite posterior,
    /// Cholesky breakdown) at a known iteration.
    #[error("sampler failure at chain {chain} iteration {iteration}: {message}")]
    Sampler {
        chain: usize,
        iteration: usize,
        message: String,
    },

    /// Text-format parsing failed at a specific line.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Summaries/diagnostics were asked of unusable draws.
    #[error("diagnostics error: {0}")]
    Diagnostics(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
