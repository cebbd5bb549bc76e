use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("singular block: {0}")]
    SingularBlock(String),
    #[error("matrix not positive definite: {0}")]
    NotPositiveDefinite(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("gain recovery failed at stage {stage}{}: {reason}", block.map(|b| format!(", block {b}")).unwrap_or_default())]
    Recovery {
        stage: usize,
        block: Option<usize>,
        reason: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
