//! Reverse-mode automatic differentiation on flat f64 tensors.
//!
//! The graph is built eagerly as ops run and torn down by a single backward
//! pass. Everything is single threaded and deterministic: identical inputs
//! give bitwise identical values and gradients on every run.

pub mod adam;
pub mod gradcheck;
pub mod ops;
pub mod tensor;

pub use adam::{AdamParams, AdamState, Optimizer};
pub use tensor::{backward, no_grad, Tensor};
