//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! The engine is a flat tape: every operation appends a node holding its
//! forward value and whatever it needs for the backward pass. Parameters are
//! copied onto the tape as leaves, and [`Tape::backward`] returns a
//! [`Gradients`] table that can be written back into the owning
//! [`Parameter`]s before an [`AdamState`] step.
//!
//! Only the operations needed by a small residual CNN are provided:
//! 2-D convolution, ReLU, affine layers, residual addition, strided
//! subsampling, global average pooling and softmax cross-entropy.

mod adam;
mod error;
mod gemm;
mod ops;
mod param;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use error::AutodiffError;
pub use param::{ParamId, Parameter, Role};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

pub type Result<T, E = AutodiffError> = std::result::Result<T, E>;
