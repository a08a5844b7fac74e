//! Numeric substrate: dense feedforward models, exact reverse-mode
//! gradients, optimizers, schedules, and the instance-batched training loop.

mod mlp;
mod optim;
mod train;

pub use mlp::{ForwardCache, Mlp};
pub use optim::{
    cyclic_lr, LrSchedule, Optimizer, OptimizerKind, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON,
};
pub use train::{
    mean_loss, predict_instance, train, InstanceLoss, MseLoss, TrainConfig, TrainExample,
    TrainHistory,
};
