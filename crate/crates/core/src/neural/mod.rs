//! Minimal dense-network toolkit: `f32` tensors, fully connected layers with
//! batch renormalization and ReLU, a tanh-squashed Gaussian policy head,
//! hand-written reverse-mode gradients and the Adam optimizer.

mod adam;
mod mlp;
mod norm;
mod policy;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use mlp::{Gradients, Linear, Mlp, MlpCache, MlpSpec, Mode};
pub use norm::{BatchNormConfig, BatchRenorm, NormCache};
pub use policy::{deterministic_actions, GaussianSample, LOG_STD_MAX, LOG_STD_MIN, SQUASH_EPS};
pub use tensor::{matmul, matmul_nt, matmul_tn, Tensor};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NeuralError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite values in {0}")]
    NonFinite(String),
}
