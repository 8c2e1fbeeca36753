//! Training regimes, evaluation and checkpointing for gaze target
//! detection from upper-body pose and depth.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod archive;
pub mod checkpoint;
pub mod config;
pub mod error;
pub mod eval;
pub mod inputs;
pub mod pipeline;
pub mod run;
pub mod trainer;

pub use checkpoint::{EpochRecord, Stage, TrainState};
pub use config::{LrSchedule, ModelPreset, Regime, TrainConfig};
pub use error::{Result, TrainError};
pub use eval::{evaluate, Baseline, BaselinePredictor, EvalReport, ModelPredictor, OraclePredictor, Prediction, Predictor};
pub use inputs::Dataset;
pub use pipeline::Pipeline;
pub use run::{run_training, RunSummary};
pub use trainer::{resume, train_full, train_gaze_stage, StageOutcome};
