//! Minimal reverse-mode differentiation substrate: tensors, parameters, and a tape
//! of the primitives the summarization model is built from.

pub mod gradcheck;
pub mod kernels;
mod params;
mod tape;
mod tensor;

pub use params::{Gradients, HasParams, ParamId, ParamStore, Parameter};
pub use tape::{AttentionOutput, Padding, Tape, Var};
pub use tensor::{Real, Tensor};
