//! Dense 2-D tensors and a define-by-run reverse-mode autodiff tape.

mod param;
mod tape;
mod tensor;

pub use param::{ParamId, ParamSet, Parameter};
pub use tape::{sigmoid, softmax_rows, softplus, ElementwiseOp, Gradients, Tape, Var};
pub use tensor::Tensor2D;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NumError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("tensor dimensions must be positive, got {rows}x{cols}")]
    EmptyShape { rows: usize, cols: usize },
    #[error("{rows}x{cols} tensor needs {} values, got {len}", rows * cols)]
    DataLength { rows: usize, cols: usize, len: usize },
    #[error("{op}: index {index} out of range (bound {bound})")]
    OutOfRange {
        op: &'static str,
        index: usize,
        bound: usize,
    },
    #[error("{op}: expected {expected} operand(s), got {got}")]
    Arity {
        op: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("loss variable was not recorded on this tape")]
    NotOnTape,
    #[error("backward needs a 1x1 loss, got {shape:?}")]
    NotScalar { shape: (usize, usize) },
    #[error("tensor dump: {0}")]
    Parse(String),
}
