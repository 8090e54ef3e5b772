use thiserror::Error;

pub type Result<T> = std::result::Result<T, DiceError>;

#[derive(Debug, Error)]
pub enum DiceError {
    /// Caller supplied something malformed: mismatched dimensions, bad
    /// probabilities, unsupported actions, empty datasets.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The MDP/policy pair violates a structural requirement (reducible
    /// restart chain, non-terminating recurrent class, ...).
    #[error("model error: {0}")]
    Model(String),

    #[error("numerical error at step {step}: {message}")]
    Numerical { step: u64, message: String },

    #[error("singular system: {message}; eigenvalues {eigenvalues:?}")]
    Singular { message: String, eigenvalues: Vec<(f64, f64)> },

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl DiceError {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        DiceError::InvalidInput(msg.into())
    }

    pub(crate) fn model(msg: impl Into<String>) -> Self {
        DiceError::Model(msg.into())
    }
}
