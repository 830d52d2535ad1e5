//! Minimal classical deep-learning stack.
//!
//! Dense tensors, the layers used by the beamforming predictors (2-D
//! convolution, batch normalization, fully-connected, elementwise
//! activations), hand-written backward passes and the Adam optimizer.
//! There is no general autodiff graph; the four fixed architectures in
//! [`crate::models`] wire these pieces explicitly.

mod adam;
mod gradcheck;
mod layers;
mod tensor;

pub use adam::{adam_step, AdamHyper, AdamState};
pub use gradcheck::grad_check;
pub use layers::{
    relu, relu_backward, sigmoid, sigmoid_backward, tanh_act, tanh_backward, BatchNorm2d, BnCache,
    BnMode, Conv2d, Linear,
};
pub use tensor::{Param, Tensor};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("data length {got} does not match shape product {expected}")]
    BadLength { expected: usize, got: usize },
    #[error("batch normalization in train mode needs a batch of at least 2")]
    BatchTooSmall,
}

#[cfg(test)]
mod tests;
