use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("structural check failed: {0}")]
    Structural(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("index {index} out of range {lo}..={hi}")]
    IndexOutOfRange { index: usize, lo: usize, hi: usize },
    #[error("unknown reference signal `{0}`")]
    UnknownReference(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("schema mismatch: {0}")]
    Schema(String),
    #[error("solver: {0}")]
    Solver(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
