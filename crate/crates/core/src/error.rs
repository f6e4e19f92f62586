use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("{0} must not be empty")]
    Empty(&'static str),

    #[error("invalid {name} = {value}: expected {expected}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },

    #[error("shape mismatch in {context}: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        context: &'static str,
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("clusters do not partition 0..{n}: {reason}")]
    NotAPartition { n: usize, reason: String },

    #[error("density core of cluster {cluster} is empty")]
    EmptyCore { cluster: usize },

    #[error("KL divergence is infinite: q[{row}][{col}] = 0 where p > 0")]
    InfiniteDivergence { row: usize, col: usize },

    #[error("cluster {cluster} has zero total soft-assignment mass")]
    ZeroColumnMass { cluster: usize },

    #[error("requested {k} clusters from {n} points")]
    TooManyClusters { k: usize, n: usize },

    #[error("activation cache was produced by parameter version {cached}, current version is {current}")]
    StaleCache { cached: u64, current: u64 },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("bad {what} magic number: expected {expected:#010x}, found {found:#010x}")]
    BadMagic {
        what: &'static str,
        expected: u32,
        found: u32,
    },

    #[error("invalid format: {0}")]
    Format(String),

    #[error("data set {0} carries no ground-truth labels")]
    MissingLabels(String),

    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, value: f64, expected: &'static str) -> Self {
        Error::InvalidParameter {
            name,
            value,
            expected,
        }
    }
}
