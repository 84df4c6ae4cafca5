//! Losses, Adam, dataset splitting and the training loop.

mod adam;
mod loss;
mod split;
mod trainer;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use loss::{
    jaccard_loss, mse_loss, multitask_loss, task_loss, LossWeights, MultiTaskLoss, DEFAULT_SMOOTH,
};
pub use split::{split_dataset, split_dataset_blocked, DatasetSplit, DEFAULT_TEST_FRACTION};
pub use trainer::{history_csv, train, EpochRecord, TrainConfig, TrainOutcome, Trainer};
