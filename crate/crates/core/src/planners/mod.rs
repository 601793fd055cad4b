//! Planning procedures over a differentiable world model: gradient-refined
//! MPC over sampled candidates, the cross-entropy method, and a hybrid that
//! initializes from a policy network and refines against a value objective.

mod cem;
mod grad_mpc;
mod hybrid;
mod imagination;

pub use cem::plan_cem;
pub use grad_mpc::plan_grad_mpc;
pub use hybrid::plan_policy_grad_mpc;
pub use imagination::{
    imagine_return, imagine_trajectory, ImaginationModel, Policy, RssmImagination,
    RssmRewardObjective, StateObjective,
};

use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tensor;
use crate::error::{GradError, Result};
use crate::rng;

/// Planner hyperparameters. Defaults are the reference configuration:
/// horizon 12, 40 optimization iterations, 1000 candidates, the
/// 0.1-0.01-0.005-0.0001 action learning-rate schedule.
#[derive(Clone, Debug)]
pub struct PlannerConfig {
    pub horizon: usize,
    pub iterations: usize,
    pub candidates: usize,
    /// Applied in equal blocks across the iterations.
    pub action_lr_schedule: Vec<f64>,
    /// Discount over imagined steps; 1.0 reproduces the undiscounted sum.
    pub discount: f64,
    /// Elite sample count (cross-entropy refit only).
    pub elite_count: usize,
    /// Mixing rate for the hybrid planner's lambda-return objective.
    pub lambda: f64,
    pub seed: u64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            horizon: 12,
            iterations: 40,
            candidates: 1000,
            action_lr_schedule: vec![0.1, 0.01, 0.005, 0.0001],
            discount: 1.0,
            elite_count: 100,
            lambda: 0.95,
            seed: 0,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(GradError::InvalidConfig("planning-horizon must be >= 1".into()));
        }
        if self.candidates == 0 {
            return Err(GradError::InvalidConfig("candidates must be >= 1".into()));
        }
        if self.elite_count == 0 || self.elite_count > self.candidates {
            return Err(GradError::InvalidConfig(format!(
                "elite count {} must lie in 1..=candidates ({})",
                self.elite_count, self.candidates
            )));
        }
        if self.action_lr_schedule.is_empty()
            || self.action_lr_schedule.iter().any(|&a| a <= 0.0)
        {
            return Err(GradError::InvalidConfig(
                "action-learning-rate schedule must be non-empty and positive".into(),
            ));
        }
        if !(0.0 < self.discount && self.discount <= 1.0) {
            return Err(GradError::InvalidConfig(format!(
                "discount {} outside (0, 1]",
                self.discount
            )));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(GradError::InvalidConfig(format!(
                "lambda {} outside [0, 1]",
                self.lambda
            )));
        }
        Ok(())
    }

    /// Learning rate for iteration `it` of `total`: the schedule is split
    /// into equal blocks across the run.
    pub fn rate_for_iteration(&self, it: usize, total: usize) -> f64 {
        let idx = (it * self.action_lr_schedule.len()) / total.max(1);
        self.action_lr_schedule[idx.min(self.action_lr_schedule.len() - 1)]
    }
}

/// A candidate action sequence with its accumulated objective value.
/// Actions are an [H, m] tensor kept inside the [-1, 1] box.
#[derive(Clone, Debug)]
pub struct ActionPlan {
    pub actions: Tensor,
    pub ret: f64,
}

impl ActionPlan {
    pub fn first_action(&self) -> Tensor {
        self.actions.row(0)
    }

    pub fn horizon(&self) -> usize {
        self.actions.dims2().0
    }

    pub fn within_bounds(&self) -> bool {
        self.actions.data().iter().all(|v| v.abs() <= 1.0 + 1e-12)
    }
}

/// Zero-mean Gaussian exploration noise added to an executed action and
/// clipped back to the action box. Applied only during training-time
/// collection, never inside planner iterations.
pub fn add_exploration_noise(action: &Tensor, scale: f64, rng: &mut ChaCha8Rng) -> Tensor {
    if scale == 0.0 {
        return action.clone();
    }
    let noise = rng::normal_tensor(rng, action.shape());
    let data: Vec<f64> = action
        .data()
        .iter()
        .zip(noise.data())
        .map(|(a, n)| (a + scale * n).clamp(-1.0, 1.0))
        .collect();
    Tensor::from_op(action.shape().to_vec(), data)
}

pub(crate) fn clip_unit(data: &mut [f64]) {
    for v in data {
        *v = v.clamp(-1.0, 1.0);
    }
}
