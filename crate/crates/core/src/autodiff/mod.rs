//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! Build a [`Tape`], register parameters with [`Tape::param`] and constants
//! with [`Tape::constant`], compose ops, then call [`Tape::backward`] on a
//! scalar node.

mod adam;
mod params;
mod tape;
mod tensor;

use thiserror::Error;

pub use adam::{clip_grad_norm, AdamConfig, AdamState};
pub use params::{Binding, ParamId, ParamSet};
pub use tape::{Gradients, NodeId, Tape};
pub use tensor::Tensor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("shape mismatch in {op}: got {got:?}, expected {expected:?}")]
    ShapeMismatch {
        op: &'static str,
        got: Vec<usize>,
        expected: Vec<usize>,
    },
    #[error("index {index} out of range for {len} rows")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("unknown parameter {0:?}")]
    UnknownParam(String),
}
