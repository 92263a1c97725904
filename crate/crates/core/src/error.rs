use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: line {line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("node id {id} out of bounds for {len} nodes")]
    Bounds { id: usize, len: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("cannot add {requested} edges: only {available} free slots")]
    Capacity { requested: usize, available: usize },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("inconsistent labels: {0}")]
    Consistency(String),

    #[error("accuracy estimation needs at least one labeled positive")]
    Estimation,

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("twin lookup failed: {0}")]
    Lookup(String),

    #[error("oracle budget of {budget} queries exhausted")]
    BudgetExhausted { budget: usize },

    #[error("metric undefined: {0}")]
    Metric(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
