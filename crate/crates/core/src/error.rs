use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },
    #[error("missing input file {0}")]
    MissingFile(PathBuf),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("bin fitting needs at least {needed} distinct intervals, found {found}; use fewer bins")]
    TooFewDistinctIntervals { needed: usize, found: usize },
    #[error("behavior tables need at least one labeled record")]
    EmptyBehaviorInput,
    #[error("context range must be in 1..=5, got {0}")]
    ContextRange(usize),
    #[error("logistic regression needs both positive and negative labels")]
    SingleClass,
    #[error("feature row has width {got}, model expects {expected}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("leakage guard: record at {timestamp} lies inside the model's training window [{start}, {end}]")]
    Leakage { timestamp: i64, start: i64, end: i64 },
    #[error("non-finite gradient at epoch {epoch}, pair {pair}")]
    NonFinite { epoch: usize, pair: usize },
    #[error("no user has a relevant item; MAP is undefined")]
    NoEvaluableUsers,
    #[error("predictions and ground truth share no users ({predicted} predicted, {truth} in truth)")]
    DisjointUsers { predicted: usize, truth: usize },
    #[error("{file} was written under config hash {found}, the current config hashes to {expected}")]
    HashMismatch {
        file: PathBuf,
        expected: String,
        found: String,
    },
    #[error("model file: {0}")]
    ModelFormat(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
