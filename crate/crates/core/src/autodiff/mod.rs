//! Minimal reverse-mode automatic differentiation over dense f64 tensors.
//!
//! The graph is rebuilt per forward pass (define-by-run); a single graph is
//! confined to one worker, while parameter tensors act as immutable
//! snapshots that any number of independent graphs may read.

mod adam;
mod composite;
mod tape;
mod tensor;

pub use adam::{adam_step, clip_grad_norm, AdamState, NamedTensors};
pub use composite::{
    diagonal_gaussian_kl, diagonal_gaussian_kl_rows, gaussian_log_density,
    gaussian_log_density_rows, gaussian_sample, gru_cell, GaussianParams, GruNodes,
};
pub use tape::{Gradients, NodeId, Tape};
pub use tensor::Tensor;
