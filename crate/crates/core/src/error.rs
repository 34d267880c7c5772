use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("length mismatch: {what} has {got} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("score at index {index} is not finite")]
    NonFiniteScore { index: usize },
    #[error("positive at index {index} has no IoU")]
    MissingIou { index: usize },
    #[error("negative at index {index} carries an IoU")]
    UnexpectedIou { index: usize },
    #[error("IoU {iou} at index {index} is outside [0, 1]")]
    IouOutOfRange { index: usize, iou: f64 },
    #[error("delta must be finite and non-negative, got {0}")]
    InvalidDelta(f64),
    #[error("index {index} is not a positive")]
    NotPositive { index: usize },
    #[error("instance with {len} logits exceeds the pairwise oracle limit of {limit}")]
    TooLarge { len: usize, limit: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown loss kind `{0}` (expected ap, rs, bap, brs, oracle-ap or oracle-rs)")]
    UnknownLoss(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
