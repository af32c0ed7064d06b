//! Dense tensors and reverse-mode automatic differentiation.

mod graph;
pub mod kernels;
mod tensor;

pub use graph::{CrossEntropy, Graph, Var};
pub use tensor::Tensor;
