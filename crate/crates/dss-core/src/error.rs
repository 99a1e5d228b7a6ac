use thiserror::Error;

/// Errors surfaced by the pipeline crates.
#[derive(Debug, Error)]
pub enum DssError {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("schema error at line {line}: {msg}")]
    Schema { line: usize, msg: String },

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("image error: {0}")]
    Image(String),
}

impl DssError {
    pub fn dim(msg: impl Into<String>) -> Self {
        DssError::Dimension(msg.into())
    }
    pub fn param(msg: impl Into<String>) -> Self {
        DssError::Parameter(msg.into())
    }
    pub fn config(msg: impl Into<String>) -> Self {
        DssError::Config(msg.into())
    }
}
