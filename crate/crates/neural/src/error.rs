use thiserror::Error;

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid layer specification: {0}")]
    BadSpec(String),

    #[error("checkpoint format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
