//! Multimodal regressor with hand-written backpropagation.

pub mod checkpoint;
pub mod conv;
pub mod gradcheck;
pub mod layers;
pub mod loss;
pub mod model;
pub mod optim;
pub mod params;
pub mod train;
pub mod transformer;

pub use loss::{loss_joint, LossVariant};
pub use model::{Forward, Model, ModelConfig, ModelInput, Mode};
pub use transformer::AttentionMaps;
