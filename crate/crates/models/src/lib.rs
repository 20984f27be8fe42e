//! Link-counting and link-length estimators built on `kinchain-nn`.

pub mod arch;
pub mod check;
mod error;
pub mod estimator;
pub mod naive;
pub mod train;

pub use arch::{Architecture, Network, Task};
pub use error::{ModelError, Result};
pub use estimator::{
    argmax, build_counter_cnn_lstm, build_counter_conv3d, build_end_to_end, build_length_regressor,
    pad_lengths, Estimator,
};
pub use naive::NaivePipeline;
pub use train::{train, EpochRecord, History, StackSource, TrainConfig};
