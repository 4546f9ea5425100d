pub mod arap;
pub mod camera;
pub mod edgeloss;
pub mod error;
pub mod meshing;
pub mod sampler;
pub mod types;
pub mod metrics;
pub mod regen;
pub mod pipeline;
