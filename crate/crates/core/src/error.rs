use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Neural(#[from] thz360_neural::NeuralError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
