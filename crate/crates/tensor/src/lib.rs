//! Dense row-major tensors and a tape-based reverse-mode differentiation
//! graph, with the operation set needed by the affinity mixup network:
//! convolutions, batch normalization, recurrent layers, pairwise distances,
//! masked softmax, l-norm pooling and linear up-sampling.
//!
//! Values live in [`Tensor`]; differentiable computations are recorded on a
//! [`Graph`] through [`Var`] handles and differentiated with
//! [`Graph::backward`].

mod error;
mod gemm;
mod graph;
mod real;
mod tensor;

pub mod check;
pub mod ops;

pub use error::{Result, TensorError};
pub use graph::{BackwardFn, Gradients, Graph, Var};
pub use ops::gru::{BiGru, GruCell};
pub use ops::norm::{BatchNormMode, RunningStats};
pub use real::Real;
pub use tensor::Tensor;

pub use gemm::{gemm_nn, gemm_nt, gemm_tn};
