use thiserror::Error;

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("mask shapes differ: {0:?} vs {1:?}")]
    MaskShape((usize, usize), (usize, usize)),
    #[error("signal of {len} samples is shorter than one {window}-sample window")]
    SignalTooShort { len: usize, window: usize },
    #[error("cannot reach SINR target: {0}")]
    InfeasibleSinr(String),
    #[error("cannot realize {subcategory} in {attempts} attempts: {reason}")]
    ImpossibleScene {
        subcategory: String,
        attempts: u32,
        reason: String,
    },
    #[error("dataset format: {0}")]
    Format(String),
    #[error("checksum mismatch for {file}: manifest has {expected}, file hashes to {actual}")]
    Checksum {
        file: String,
        expected: String,
        actual: String,
    },
    #[error("unsupported dataset version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
