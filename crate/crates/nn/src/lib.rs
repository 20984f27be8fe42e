//! A small sequential neural-network engine: channels-last tensors, layers
//! with hand-written backward passes, losses, optimizers, gradient checking and
//! checkpoints. Generic over `f32` (training) and `f64` (verification).

pub mod checkpoint;
mod error;
pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod loss;
pub mod optim;
pub mod scalar;
pub mod tensor;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CheckpointMeta};
pub use error::{NnError, Result};
pub use gradcheck::{grad_check, GradCheckConfig, GradCheckReport};
pub use graph::{count_params, infer_shapes, ModelGraph};
pub use layers::{lstm_step, LayerSpec};
pub use loss::{cross_entropy, sum_squared, Loss};
pub use optim::{Optimizer, OptimizerKind};
pub use scalar::Scalar;
pub use tensor::Tensor;
