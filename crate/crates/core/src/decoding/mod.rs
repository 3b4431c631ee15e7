//! Constrained beam search and the control-inference protocols built on it.

mod beam;
mod inference;
mod stepper;
mod tune;

pub use beam::{beam_search, greedy, has_repeated_trigram, BeamHypothesis, DecodeConstraints, Decoded, StepModel};
pub use inference::{
    boundary_partition, fixed_control_spec, FixedControls, Lead3Entities, PartitionedLengths, RemainderMethod,
    Summarizer, Summary, NUM_PARTITIONS,
};
pub use stepper::ConvStepper;
pub use tune::{argmax_index, default_length_grid, tune_min_max, TunedLengths};
