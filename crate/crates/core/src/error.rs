use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("invalid penalty: {0}")]
    InvalidPenalty(String),

    #[error("conflicting utility entry at [{row}][{col}]")]
    Conflict { row: usize, col: usize },

    #[error("log-probabilities are not normalized (sum of exponentials = {sum})")]
    Normalization { sum: f64 },

    #[error("index {index} out of range for {len} classes")]
    Index { index: usize, len: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("infeasible imbalance: rho = {rho} exceeds per-class count {per_class}")]
    InfeasibleImbalance { rho: f64, per_class: usize },

    #[error("singular importance weight: f(n_y) = 0 for n_y = {count}")]
    SingularWeight { count: usize },

    #[error("non-finite activation in forward pass")]
    NumericOverflow,

    #[error("inconsistent class counts: {0}")]
    InconsistentCounts(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("undefined rate: {0}")]
    UndefinedRate(String),

    #[error("training diverged: non-finite loss at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },

    #[error("invalid data: {0}")]
    Data(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<toml::ser::Error> for Error {
    fn from(e: toml::ser::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
