//! Command implementations and synthetic corpora for the `ctrlsum` binary.

pub mod commands;
pub mod config;
pub mod synth;
