//! Model-based planning on learned recurrent state-space world models.
//!
//! The crate bundles a small reverse-mode autodiff engine, the RSSM world
//! model with its variational training objective, three planners over the
//! model (gradient-refined MPC, cross-entropy, and a policy-initialized
//! hybrid), actor-critic training in imagination, desk-scale control
//! environments with an LQR oracle, and a deterministic experiment harness.

pub mod autodiff;
pub mod agents;
pub mod checkpoint;
pub mod config;
pub mod envs;
pub mod error;
pub mod gradcheck;
pub mod harness;
#[cfg(any(test, feature = "test-oracles"))]
pub mod oracles;
pub mod planners;
pub mod rng;
pub mod world_model;

pub use autodiff::{NodeId, Tape, Tensor};
pub use error::{GradError, Result};
