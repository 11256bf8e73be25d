//! Learned construction policy and the small autodiff engine it runs on.

pub mod adam;
pub mod checkpoint;
pub mod features;
pub mod graph;
pub mod model;
pub mod policy;
pub mod tensor;

pub use checkpoint::{load_params, save_params};
pub use features::{compute_features, NormStats, StateFeatures};
pub use model::{PolicyConfig, PolicyParams};
pub use policy::NeuralPolicy;
pub use tensor::Tensor;
