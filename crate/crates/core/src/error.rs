//! Error type shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input data (bad cell, wrong row width, ...), with the
    /// 1-based CSV line the problem was found on.
    #[error("ingestion error at line {line}: {message}")]
    Ingest { line: usize, message: String },

    /// Schema does not match the input file.
    #[error("schema error: {0}")]
    Schema(String),

    /// An operation was applied to a column of the wrong kind, or the
    /// dataset is in the wrong preprocessing state.
    #[error("type error: {0}")]
    Type(String),

    /// No rows survived filtering.
    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    /// Too few rows to compute the requested statistics.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Matrix dimensions do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// The optimizer produced a non-finite objective.
    #[error("divergence at iteration {iteration}: objective is not finite")]
    Divergence { iteration: usize },

    /// Invalid argument value.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// Bad run configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// The regularization sweep could not produce a usable result.
    #[error("sweep error: {0}")]
    Sweep(String),

    /// Cross-validation folds selected no common features.
    #[error("empty feature intersection: {0}")]
    EmptyIntersection(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 configuration, 3 data, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Schema(_)
            | Error::Parameter(_)
            | Error::Config(_)
            | Error::Sweep(_)
            | Error::EmptyIntersection(_) => 2,
            Error::Ingest { .. }
            | Error::Type(_)
            | Error::EmptyDataset(_)
            | Error::InsufficientData(_)
            | Error::Shape(_)
            | Error::Io(_)
            | Error::Csv(_)
            | Error::Json(_) => 3,
            Error::Divergence { .. } => 4,
        }
    }

    /// Short machine-readable kind tag used in CLI error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Ingest { .. } => "ingest",
            Error::Schema(_) => "schema",
            Error::Type(_) => "type",
            Error::EmptyDataset(_) => "empty_dataset",
            Error::InsufficientData(_) => "insufficient_data",
            Error::Shape(_) => "shape",
            Error::Divergence { .. } => "divergence",
            Error::Parameter(_) => "parameter",
            Error::Config(_) => "config",
            Error::Sweep(_) => "sweep",
            Error::EmptyIntersection(_) => "empty_intersection",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}
