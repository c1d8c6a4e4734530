//! Differentiable network engine: dense and convolutional layers, residual
//! blocks, the losses used by the pipelines, Adam/RMSprop, schedulers and
//! early stopping.

mod checkpoint;
mod kernels;
pub mod loss;
mod network;
pub mod optim;
mod scaler;
mod tensor;
mod train;

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use network::{Activation, GradSeed, LayerSpec, Network, NetworkSpec, Tape};
pub use optim::{EarlyStopping, Optimizer, OptimizerConfig, OptimizerKind, Scheduler, SchedulerConfig};
pub use scaler::Standardizer;
pub use tensor::Tensor;
pub use train::{train, EpochRecord, History, Objective, Validation};
