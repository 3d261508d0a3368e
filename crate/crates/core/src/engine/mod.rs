//! Reverse-mode automatic differentiation over dense NCHW tensors.

pub mod gradcheck;
mod graph;
pub(crate) mod kernels;
mod tensor;

pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport};
pub use graph::{BatchStats, BnMode, Fault, Graph, Padding, Reduction, Var, BN_EPSILON};
pub use kernels::{set_threads, threads};
pub use tensor::{DType, Float, Tensor};

#[cfg(test)]
mod tests;
