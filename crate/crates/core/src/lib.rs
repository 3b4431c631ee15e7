//! Controllable abstractive summarization.
//!
//! A convolutional encoder-decoder conditioned on control tokens prepended to the
//! source (length bin, requested entities, source style, and a read/remainder split),
//! together with the data pipeline, training loop, constrained beam search and ROUGE
//! evaluation needed to exercise each control.

pub mod error;
pub mod numeric;

pub use error::{Error, Result};
pub mod corpus;
pub mod decoding;
pub mod evaluation;
pub mod model;
pub mod pipeline;
pub mod tokenization;
pub mod training;
