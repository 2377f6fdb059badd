//! Negative-sampling training with Adam, checkpointing and resumption.

mod adam;
mod checkpoint;
mod config;
mod loss;
mod trainer;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{Checkpoint, TrainProgress, FORMAT_VERSION};
pub use config::{TrainConfig, LEARNING_RATE_GRID, NEGATIVES_GRID, WEIGHT_DECAY_GRID};
pub use loss::{negative_sampling_loss, negative_sampling_loss_on_tape, sample_negatives, PROB_CLAMP};
pub use trainer::{
    evaluation_noise, query_edges, query_loss, resume, train, train_step, training_noise, LogRecord, StopReason,
    TrainOptions, TrainOutcome, BEST_CHECKPOINT, LAST_CHECKPOINT, METRICS_FILE,
};
