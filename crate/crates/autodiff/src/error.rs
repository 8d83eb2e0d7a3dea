use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("shape {shape:?} holds {expected} elements but {actual} values were supplied")]
    DataLength {
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },
    #[error("shape must be non-empty with positive extents, got {0:?}")]
    InvalidShape(Vec<usize>),
    #[error("{op}: dimension mismatch: {detail}")]
    DimensionMismatch { op: &'static str, detail: String },
    #[error("{op}: invalid configuration: {detail}")]
    Configuration { op: &'static str, detail: String },
    #[error("label {label} at row {row} is outside 0..{classes}")]
    InvalidLabel {
        row: usize,
        label: usize,
        classes: usize,
    },
    #[error("parameter {0} has no gradient")]
    MissingGradient(u32),
    #[error("optimizer state is not aligned with the parameter list: {0}")]
    StateMismatch(String),
    #[error("backward must start from a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
}
