//! Adadelta optimization, parameter initialization, the two-stage
//! schedule and evaluation.

mod adadelta;
mod eval;
mod init;
mod prepare;
mod schedule;

pub use adadelta::{adadelta_step, clip_global_norm, AdadeltaConfig, AdadeltaState};
pub use eval::{evaluate_accuracy, evaluate_head_mse, predict_probs, AccuracyRow, MseRow};
pub use init::{init_model, init_params, truncated_normal, BIAS_STD, WEIGHT_STD};
pub use prepare::{prepare, prepare_training};
pub use schedule::{
    fixed_loss, new_optimizer, pretrain, run_epochs, train_classifier, EpochLog, Stage, TrainConfig,
};
