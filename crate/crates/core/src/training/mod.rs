//! Teacher-forced training: Nesterov momentum with global-norm clipping and a
//! validation-driven learning-rate schedule.

mod batching;
mod optim;
mod trainer;

pub use batching::length_bucketed_batches;
pub use optim::{clip_gradients, nesterov_step, LrSchedule};
pub use trainer::{
    batch_gradients, example_seed, format_train_log, train, validate, EpochLog, Example, TargetScorer, TrainConfig,
    TrainReport, TRAIN_LOG_HEADER,
};
