use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input dimension {got} too small: need at least {required}")]
    DimensionTooSmall { required: usize, got: usize },

    #[error("similarity rho = {0} outside [0, 1]")]
    InvalidRho(f64),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("numerical divergence at step {step}: loss {loss} exceeds bound {bound}")]
    Divergence { step: usize, loss: f64, bound: f64 },

    #[error("gram factorization failed: {0}")]
    Factorization(String),

    #[error("alignment undefined: centered matrix has zero norm")]
    UndefinedAlignment,

    #[error("expected {expected} matrix, got {got}")]
    KindMismatch { expected: &'static str, got: &'static str },

    #[error("metric needs at least two tasks")]
    SingleTask,

    #[error("every task has zero maximum; relative drop undefined")]
    AllTasksExcluded,

    #[error("no checkpoints after the reference index")]
    EmptyWindow,

    #[error("trajectories cannot be aligned: {0}")]
    Alignment(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
