use thiserror::Error;

use crate::lp::LpStatus;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller supplied a value outside the operation's domain.
    #[error("invalid input: {0}")]
    Input(String),

    #[error("index {index} out of range for {len} locations")]
    Index { index: usize, len: usize },

    /// A graph or matrix does not have the structure an operation needs.
    #[error("structural error: {0}")]
    Structural(String),

    #[error("linear program ended with status {status:?}: {detail}")]
    Solver { status: LpStatus, detail: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("calibration failed: target {target} outside attainable quality loss [{min_ql}, {max_ql}]")]
    Calibration {
        target: f64,
        min_ql: f64,
        max_ql: f64,
    },

    #[error("invalid prior: {0}")]
    Prior(String),

    /// Operation called with arguments violating its contract (e.g. a
    /// non-optimal solution handed to a duality check).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("ingestion failed: {malformed} of {total} lines malformed (first at lines {lines:?})")]
    Ingest {
        malformed: usize,
        total: usize,
        lines: Vec<usize>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }
}
