//! Losses, negative sampling, gradients, Adam and the early-stopped
//! training loop.

mod adam;
mod fit;
mod grad;
mod loss;
mod sampler;

pub use adam::{adam_step, AdamConfig, OptimState};
pub use fit::{
    fit, fit_model, log_to_jsonl, tune_temperature, EpochLog, FitResult, MixStrategy, ModelSpec, TrainConfig,
    TrainData, SELECTION_K,
};
pub use grad::{batch_loss, compute_gradients, LossAndGrad, Objective, TrainBatch, NORM_EPS};
pub use loss::{bpr_group, bpr_loss, infonce_group, infonce_loss, GroupLoss, LossKind, ScoreGroup};
pub use sampler::{sample_negatives, NegativePools};
