//! End-to-end subcommands: synthetic scenes, ground truth, patch
//! preparation, training, evaluation, prediction and aggregation.

pub mod cli;
mod commands;
mod config;

pub use commands::{
    cmd_aggregate, cmd_eval, cmd_ground_truth, cmd_predict, cmd_prepare, cmd_synth, cmd_train,
    crop, expected_patch_count, ground_truth, impervious_mask, naip_ndvi, network_inputs, outputs,
    predict_raster, prepare_patches, AggregateSummary, EvalSplit, GroundTruth, Imagery,
    InputStats, PrepareSummary, TrainSummary,
};
pub use config::{GroundTruthConfig, PipelineConfig, PrepareConfig};
