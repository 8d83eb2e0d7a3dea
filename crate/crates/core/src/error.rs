use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error("input {height}x{width} is too small for four downsampling stages (minimum {min}x{min})")]
    InputTooSmall { height: usize, width: usize, min: usize },
    #[error("input batch shape {actual:?} does not match model input [N,{}, {}, {}]", expected[1], expected[2], expected[3])]
    InputShape { expected: Vec<usize>, actual: Vec<usize> },
    #[error("weight layout mismatch: {0}")]
    LayoutMismatch(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Autodiff(#[from] radfed_autodiff::AutodiffError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
