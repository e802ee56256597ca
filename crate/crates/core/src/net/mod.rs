//! Convolutional acoustic model: architecture, weights and inference.

mod engine;
mod spec;
mod weights;

pub use engine::{infer, Network, StreamRow, StreamingInference, DEFAULT_LATENCY_FRAMES};
pub use spec::{receptive_field, receptive_field_of, LayerKind, LayerSpec, NetworkSpec, PlaneShape};
pub use weights::{Tensor, WeightStore, DEFAULT_BN_EPS};
