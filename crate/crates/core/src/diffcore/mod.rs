//! Dense `f64` tensors, a reverse-mode tape, RMSprop, and checkpoint I/O.

mod checkpoint;
mod gradcheck;
mod optim;
mod param;
mod tape;
mod tensor;

use thiserror::Error;

pub use checkpoint::{load, load_into, read_checkpoint, save, write_checkpoint};
pub use gradcheck::{finite_diff_check, relative_error, GradCheckReport, REL_ERROR_FLOOR};
pub use optim::{rmsprop_step, RmsProp, RmsPropConfig, RmsPropState};
pub use param::{GradBuffer, ParamId, ParamStore, Parameter};
pub use tape::{accumulate_gradients, sigmoid, Tape, Var, PROB_CLAMP};
pub use tensor::Tensor;

#[derive(Debug, Error)]
pub enum DiffError {
    #[error("{op}: shape mismatch, expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        op: &'static str,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("{op}: expected rank {expected}, found rank {found}")]
    RankMismatch {
        op: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("{op}: expected a scalar, found {len} elements")]
    NotScalar { op: &'static str, len: usize },
    #[error("{op}: index {index} out of bounds for length {len}")]
    IndexOutOfBounds {
        op: &'static str,
        index: usize,
        len: usize,
    },
    #[error("{op}: length mismatch ({left} vs {right})")]
    LengthMismatch {
        op: &'static str,
        left: usize,
        right: usize,
    },
    #[error("{0}: empty input")]
    EmptyInput(&'static str),
    #[error("tape was already differentiated")]
    AlreadyBackpropagated,
    #[error("duplicate parameter name {0:?}")]
    DuplicateParameter(String),
    #[error("parameter layout mismatch: {0}")]
    LayoutMismatch(String),
    #[error("corrupt checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
