//! Losses, optimizers and fitting protocols.

mod fit;
mod lbfgs;
mod loss;
mod trainer;

pub use fit::{fit_gaussian_sum, fit_lbfgs, polyfit, PolyFit};
pub use lbfgs::{lbfgs_minimize, lbfgs_minimize_with, LbfgsOptions, LbfgsResult};
pub use loss::{loss_value_and_grad, mean_loss, LossSpec};
pub use trainer::{train_mlp, train_model, EpochRecord, LossKind, OptimizerKind, TrainConfig, TrainingLog};
