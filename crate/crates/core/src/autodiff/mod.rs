//! Dense f64 tensors with a dynamic reverse-mode tape.
//!
//! A [`Tape`] is rebuilt for every forward pass. Parameters live in a
//! [`ParamStore`] and enter the tape as leaves through [`Tape::param`];
//! [`Tape::backward`] returns fresh gradients each call, so nothing needs
//! zeroing between optimizer steps.

mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use gradcheck::{
    check_gradients, check_op, GradCheckOptions, GradCheckReport, ParamCheck, OP_NAMES,
};
pub use params::{
    glorot_bound, init_params, init_with_rng, Init, ParamCheckpoint, ParamEntry, ParamId,
    ParamStore, CHECKPOINT_FORMAT, CHECKPOINT_VERSION,
};
pub use tape::{Gradients, Tape, Var};
pub use tensor::{argmax, Tensor};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AutodiffError {
    #[error("{op}: shape mismatch {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("data length {len} does not match shape {shape:?}")]
    BadData { shape: Vec<usize>, len: usize },
    #[error("{op}: non-finite value produced")]
    NonFinite { op: &'static str },
    #[error("{op}: empty input")]
    EmptyInput { op: &'static str },
    #[error("{op}: index {index} out of range for length {len}")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        len: usize,
    },
    #[error("slice_chunk: cannot take chunk {index} of {count} from {cols} columns")]
    BadChunk {
        cols: usize,
        index: usize,
        count: usize,
    },
    #[error("backward called before any forward pass was recorded")]
    NoForward,
    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NotScalar { shape: Vec<usize> },
    #[error("duplicate parameter name {0}")]
    DuplicateParam(String),
    #[error("missing parameter {0}")]
    MissingParam(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("unknown op {0}")]
    UnknownOp(String),
}
