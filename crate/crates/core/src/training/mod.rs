//! Loss, optimizer, early stopping and the training loop.

mod early_stop;
mod loss;
mod optim;
mod train_loop;

pub use early_stop::{early_stop_check, EvalRecord, TrainHistory};
pub use loss::{class_weights, weighted_cross_entropy, weighted_mean_loss, ClassWeightMode};
pub use optim::{adamw_step, adamw_update, AdamWConfig, OptimizerState};
pub use train_loop::{evaluate, predict_indices, train_loop, train_loop_with, TrainConfig};
