//! Desk-scale continuous-control environments. These mirror the task
//! properties of the benchmark suite (dense/sparse rewards, action
//! dimensions 1-2) rather than porting its physics; the LQR environment
//! doubles as an analytically solvable oracle.

mod action_repeat;
mod cartpole;
mod cup_catch;
mod lqr;
mod point_reacher;
pub mod true_model;

pub use action_repeat::ActionRepeat;
pub use cartpole::{CartpoleEnv, ScriptedSwingup, CARTPOLE};
pub use cup_catch::CupCatchEnv;
pub use lqr::{lqr_optimal, LqrConstants, LqrEnv, LQR};
pub use point_reacher::PointReacherEnv;

use crate::autodiff::Tensor;
use crate::error::{GradError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sparsity {
    Dense,
    Sparse,
}

/// Static description of an environment instance.
#[derive(Clone, Debug)]
pub struct EnvSpec {
    pub name: String,
    pub obs_dim: usize,
    pub action_dim: usize,
    pub sparsity: Sparsity,
    /// Episode length in physics steps.
    pub episode_length: usize,
    pub action_repeat: usize,
}

#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub observation: Tensor,
    pub reward: f64,
    pub done: bool,
}

/// A seeded, fully deterministic state machine: (seed, action sequence)
/// pins every trajectory bit for bit.
pub trait Environment: Send {
    fn spec(&self) -> &EnvSpec;

    /// Reinitialize from a seed; returns the first observation.
    fn reset(&mut self, seed: u64) -> Tensor;

    /// Advance one physics step. Actions must lie in [-1, 1]^m.
    fn step(&mut self, action: &Tensor) -> Result<StepOutcome>;

    /// Ground-truth physical state, exposed for oracle checks and for
    /// planning against the true dynamics.
    fn state_vec(&self) -> Vec<f64>;
}

pub(crate) fn check_action_bounds(action: &Tensor, dim: usize) -> Result<()> {
    if action.len() != dim {
        return Err(GradError::ShapeMismatch {
            op: "env-step",
            detail: format!("action {:?} vs action_dim {dim}", action.shape()),
        });
    }
    if let Some(i) = action.data().iter().position(|v| v.abs() > 1.0 + 1e-12) {
        return Err(GradError::ActionOutOfBounds {
            index: i,
            value: action.data()[i],
        });
    }
    Ok(())
}

/// Environment factory keyed by the names used in config files.
pub fn make_env(name: &str) -> Result<Box<dyn Environment>> {
    match name {
        "lqr" => Ok(Box::new(LqrEnv::new())),
        "point_reacher" => Ok(Box::new(PointReacherEnv::new())),
        "cartpole_swingup" => Ok(Box::new(CartpoleEnv::dense())),
        "cartpole_swingup_sparse" => Ok(Box::new(CartpoleEnv::sparse())),
        "cup_catch" => Ok(Box::new(CupCatchEnv::new())),
        other => Err(GradError::UnknownEnv(other.to_string())),
    }
}

/// Build the configured environment with episode-length override and the
/// action-repeat wrapper applied (config value, or the env's own default).
pub fn make_env_configured(
    name: &str,
    episode_length: usize,
    action_repeat: Option<usize>,
) -> Result<Box<dyn Environment>> {
    let mut env = make_env(name)?;
    let repeat = action_repeat.unwrap_or(env.spec().action_repeat);
    if repeat == 0 {
        return Err(GradError::InvalidConfig("action-repeat must be >= 1".into()));
    }
    if episode_length % repeat != 0 {
        return Err(GradError::InvalidConfig(format!(
            "max-episode-length {episode_length} not divisible by action-repeat {repeat}"
        )));
    }
    env = apply_episode_length(env, name, episode_length)?;
    Ok(if repeat > 1 {
        action_repeat::wrap_action_repeat(env, repeat)
    } else {
        env
    })
}

fn apply_episode_length(
    env: Box<dyn Environment>,
    name: &str,
    episode_length: usize,
) -> Result<Box<dyn Environment>> {
    if env.spec().episode_length == episode_length {
        return Ok(env);
    }
    Ok(match name {
        "lqr" => {
            let mut e = LqrEnv::new();
            e.set_episode_length(episode_length);
            Box::new(e)
        }
        "point_reacher" => Box::new(PointReacherEnv::new().with_episode_length(episode_length)),
        "cartpole_swingup" => Box::new(CartpoleEnv::dense().with_episode_length(episode_length)),
        "cartpole_swingup_sparse" => {
            Box::new(CartpoleEnv::sparse().with_episode_length(episode_length))
        }
        "cup_catch" => {
            let mut e = CupCatchEnv::new();
            e.set_episode_length(episode_length);
            Box::new(e)
        }
        other => return Err(GradError::UnknownEnv(other.to_string())),
    })
}

/// Collect one episode with a raw action source. `policy(obs, t)` must
/// return an in-bounds action per agent step.
pub fn rollout_episode(
    env: &mut dyn Environment,
    seed: u64,
    mut policy: impl FnMut(&Tensor, usize) -> Tensor,
) -> Result<(Vec<Tensor>, Vec<Tensor>, Vec<f64>)> {
    let mut obs = env.reset(seed);
    let mut observations = Vec::new();
    let mut actions = Vec::new();
    let mut rewards = Vec::new();
    let mut t = 0;
    loop {
        let action = policy(&obs, t);
        let out = env.step(&action)?;
        observations.push(obs);
        actions.push(action);
        rewards.push(out.reward);
        obs = out.observation;
        t += 1;
        if out.done {
            break;
        }
    }
    Ok((observations, actions, rewards))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_env_is_an_error() {
        assert!(matches!(
            make_env("walker_walk"),
            Err(GradError::UnknownEnv(_))
        ));
    }

    #[test]
    fn same_seed_same_first_observation() {
        for name in [
            "lqr",
            "point_reacher",
            "cartpole_swingup",
            "cartpole_swingup_sparse",
            "cup_catch",
        ] {
            let mut env = make_env(name).unwrap();
            let a = env.reset(42);
            let b = env.reset(42);
            assert_eq!(a, b, "{name} reset not deterministic");
            let c = env.reset(43);
            assert_ne!(a, c, "{name} ignores the seed");
        }
    }

    #[test]
    fn trajectories_are_bit_deterministic() {
        for name in ["lqr", "point_reacher", "cartpole_swingup", "cup_catch"] {
            let run = || {
                let mut env = make_env(name).unwrap();
                let m = env.spec().action_dim;
                let mut obs = env.reset(7);
                let mut trace = Vec::new();
                for t in 0..20 {
                    let action =
                        Tensor::vector((0..m).map(|j| ((t + j) as f64 * 0.37).sin() * 0.8).collect())
                            .unwrap();
                    let out = env.step(&action).unwrap();
                    trace.push((out.observation.data().to_vec(), out.reward));
                    obs = out.observation;
                }
                let _ = obs;
                trace
            };
            assert_eq!(run(), run(), "{name} trajectory not deterministic");
        }
    }

    #[test]
    fn out_of_bounds_actions_are_rejected() {
        let mut env = make_env("point_reacher").unwrap();
        env.reset(1);
        let bad = Tensor::vector(vec![1.5, 0.0]).unwrap();
        assert!(matches!(
            env.step(&bad),
            Err(GradError::ActionOutOfBounds { .. })
        ));
    }
}
