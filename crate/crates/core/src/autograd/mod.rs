//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! Values are computed eagerly while a [`Graph`] records each operation;
//! [`Graph::backward`] then propagates adjoints from a scalar loss back to
//! every node that requires a gradient. Attention, normalization and the
//! losses are fused kernels with hand-written adjoints.

mod graph;
mod tensor;

pub use graph::{AttentionSpec, Gradients, Graph, Var};
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum AutogradError {
    #[error("graph has already been differentiated")]
    GraphConsumed,
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("loss mask selects no positions")]
    NoActivePositions,
}
