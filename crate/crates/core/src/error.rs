use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error("index {index} out of range for ensemble of size {len}")]
    Index { index: usize, len: usize },
    #[error("empty ensemble")]
    EmptyEnsemble,
    #[error("size mismatch: {0} vs {1}")]
    SizeMismatch(usize, usize),
    #[error("admissibility: {0}")]
    Admissibility(String),
    #[error("derivation failed at `{quantity}`: {reason}")]
    Derivation { quantity: String, reason: String },
    #[error("integration blow-up at step {step}, particle {particle} (x = {x}); reduce dt or enable the clamp")]
    BlowUp { step: u64, particle: usize, x: f64 },
    #[error("config: {0}")]
    Config(String),
    #[error("fit: {0}")]
    Fit(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid { field: field.into(), reason: reason.into() }
    }

    pub fn derivation(quantity: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Derivation { quantity: quantity.into(), reason: reason.into() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
