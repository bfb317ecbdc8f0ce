//! A small 1D residual CNN with squeeze-excitation, trained with Adam.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod model;
pub mod saliency;
pub mod tensor;
pub mod train;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::Checkpoint;
pub use model::{ModelParams, NetConfig, ParamSpec, StageConfig};
pub use tensor::Tensor;
pub use train::{EpochLog, LabeledSet, LossKind, TrainConfig, TrainingState};
