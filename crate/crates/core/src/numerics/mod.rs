//! Dense tensors, reverse-mode differentiation and the AdamW optimizer.

mod graph;
pub mod gradcheck;
mod kernels;
pub mod nn;
mod params;
mod tensor;

pub use graph::{Graph, Var};
pub use kernels::{attention, cross_entropy, layer_norm, softmax, AttnSegment};
pub use params::{Init, OptimHyper, ParamStore};
pub use tensor::Tensor;
