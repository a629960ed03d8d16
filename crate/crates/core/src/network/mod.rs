//! Generator (residual U-Net with refinement connection), discriminator and checkpoints.

pub mod config;
mod generator;
mod params;

pub use config::{
    discriminator_layout, generator_layout, parameter_count, DiscriminatorConfig, GeneratorConfig,
    ModelConfig, ParamSpec,
};
pub use generator::{
    check_generator_extent, discriminator_forward, discriminator_logit, generator_forward,
    generator_graph, generator_input,
};
pub use params::{
    BoundParams, CheckpointHeader, ModelParams, NamedTensor, TrainingState, FORMAT_VERSION,
};
