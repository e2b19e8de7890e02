//! Hinge + feature-matching GAN training: losses, windowed data, the
//! step loop, and resumable checkpoints.

pub mod checkpoint;
pub mod data;
pub mod loss;
pub mod trainer;

pub use checkpoint::{Checkpoint, Container, NamedTensor, MAGIC, VERSION};
pub use data::WindowSampler;
pub use loss::{
    discriminator_loss, feature_matching_loss, generator_adversarial_loss, generator_total_loss,
};
pub use trainer::{Batch, StepMetrics, TrainHyper, Trainer};
