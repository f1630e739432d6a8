//! A small reverse-mode differentiation engine over dense `f64` tensors.
//!
//! Forward values are computed eagerly while a [`Tape`] records the ops;
//! [`Tape::backward`] then walks the record in reverse. Every op rejects
//! non-finite results with the op name attached.

mod adam;
mod checkpoint;
mod gradcheck;
pub mod kernels;
mod noise;
mod tape;
mod tensor;

pub use adam::{AdamConfig, AdamState, Parameter};
pub use checkpoint::{
    Checkpoint, CheckpointError, CheckpointResult, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use gradcheck::{gradcheck, GradCheckReport};
pub use noise::NoiseSource;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiffError {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("non-finite gradient for parameter '{param}'")]
    NonFiniteGradient { param: String },
}

pub type Result<T> = std::result::Result<T, DiffError>;
