use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input contains no rating data")]
    EmptyInput,

    #[error("malformed line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },

    #[error("line {line}: rating is not a finite number")]
    InvalidRating { line: usize },

    #[error("split ratios ({train}, {validation}, {test}) must be positive and sum to 1")]
    BadRatios {
        train: f64,
        validation: f64,
        test: f64,
    },

    #[error("duplicate entry for user {user}, item {item}")]
    DuplicateEntry { user: usize, item: usize },

    #[error("{kind} index {index} out of range (len {len})")]
    IndexOutOfRange {
        kind: &'static str,
        index: usize,
        len: usize,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("numerical divergence at iteration {iteration}")]
    NumericalDivergence { iteration: usize },

    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),

    #[error("evaluation set is empty")]
    EmptyEvalSet,

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("runs do not share one split: {0}")]
    MismatchedSplits(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
