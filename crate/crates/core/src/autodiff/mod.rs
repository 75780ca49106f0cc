//! Dense tensors with reverse-mode differentiation, including
//! differentiation through a gradient computation.

mod backward;
pub mod gradcheck;
pub mod index;
mod ops;
mod tensor;

pub use backward::{backward, backward_with, grad, grad_of_grad, GradOptions, Gradients};
pub use index::IndexMap;
pub use tensor::{CustomOp, Tensor, Unary};
