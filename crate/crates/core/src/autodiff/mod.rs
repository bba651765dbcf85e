//! Minimal reverse-mode automatic differentiation over dense tensors.
//!
//! Batch is the leading axis everywhere. Image tensors are `[N, C, H, W]`,
//! feature tensors `[N, F]`.

mod graph;
mod kernels;
mod params;
mod real;
mod tensor;

pub use graph::{Gradients, Graph, Var};
pub use params::{ParamId, ParamStore};
pub use real::{Dtype, Real};
pub use tensor::Tensor;
