//! Generator and multi-scale discriminator topologies plus structural
//! validators.

pub mod backend;
pub mod config;
pub mod discriminator;
pub mod generator;
pub mod params;
pub mod validate;

pub use backend::{register_params, WnNodeIds};
pub use config::{DiscLayerSpec, DiscriminatorConfig, GeneratorConfig, NormKind};
pub use discriminator::{
    build_discriminator, discriminator_forward, discriminator_forward_graph, ScaleNodes,
    ScaleOutput,
};
pub use generator::{build_generator, generator_forward, generator_forward_graph};
pub use params::{init_wn_layer, ModelParams, WnLayer};
pub use validate::{
    receptive_field, validate_checkerboard_free, ValidationReport, Violation,
    RULE_DILATION_POWER, RULE_KERNEL_STRIDE,
};
