//! MelGAN-style conditional waveform synthesis on the CPU.
//!
//! The crate is organized around six pieces:
//!
//! - [`tensor`] / [`graph`] / [`optim`]: a minimal reverse-mode autodiff
//!   engine over `[batch, channels, time]` float tensors with exactly the
//!   operations the architecture needs.
//! - [`audio`]: WAV I/O and the log-mel spectrogram frontend (256x temporal
//!   downsampling).
//! - [`arch`]: the generator and multi-scale discriminator topologies, plus
//!   structural validators (checkerboard rules, receptive field, parameter
//!   count).
//! - [`train`]: hinge + feature-matching GAN objective, the training loop,
//!   dataset windowing and binary checkpoints.
//! - [`infer`]: an allocation-lean compiled generator and a throughput
//!   benchmark harness.
//! - the `melgan` binary: the command-line surface over all of the above.

pub mod arch;
pub mod config;
pub mod audio;
pub mod error;
pub mod graph;
pub mod infer;
pub mod kernels;
pub mod optim;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use graph::{Graph, NodeId};
pub use tensor::{ConvSpec, PaddingMode, Shape, Tensor};
