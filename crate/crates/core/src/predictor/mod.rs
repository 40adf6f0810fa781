//! Regression head that predicts recognizability from an embedding.

mod head;
mod optim;
mod train;

pub use head::{mse_loss, Dense, Gradients, RegressionHead};
pub use optim::{adamw_step, AdamWParams, OptimizerState};
pub use train::{
    predict, split_subjects, train, EpochRecord, LabelMode, PredictedScores, Predictions,
    TargetSource, TrainConfig, TrainHistory,
};
