//! 2-D double integrator reaching a fixed per-episode target. Dense reward:
//! negative distance to the target. Observation is the relative target
//! offset plus the velocity, with light Gaussian noise so posterior
//! filtering has real work to do.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tensor;
use crate::envs::{check_action_bounds, EnvSpec, Environment, Sparsity, StepOutcome};
use crate::error::Result;
use crate::rng;

pub const DT: f64 = 0.1;
pub const ACCEL_GAIN: f64 = 1.0;
pub const VELOCITY_DAMPING: f64 = 0.92;
pub const OBS_NOISE: f64 = 0.01;
/// Initial target distance range (documented sampler contract).
pub const TARGET_DIST_RANGE: (f64, f64) = (0.5, 1.5);

pub struct PointReacherEnv {
    spec: EnvSpec,
    pos: [f64; 2],
    vel: [f64; 2],
    target: [f64; 2],
    steps: usize,
    rng: ChaCha8Rng,
    obs_noise: f64,
}

impl PointReacherEnv {
    pub fn new() -> Self {
        Self {
            spec: EnvSpec {
                name: "point_reacher".into(),
                obs_dim: 4,
                action_dim: 2,
                sparsity: Sparsity::Dense,
                episode_length: 1000,
                action_repeat: 4,
            },
            pos: [0.0; 2],
            vel: [0.0; 2],
            target: [1.0, 0.0],
            steps: 0,
            rng: rng::stream(&[0]),
            obs_noise: OBS_NOISE,
        }
    }

    pub fn with_episode_length(mut self, len: usize) -> Self {
        self.spec.episode_length = len;
        self
    }

    pub fn distance(&self) -> f64 {
        let dx = self.pos[0] - self.target[0];
        let dy = self.pos[1] - self.target[1];
        (dx * dx + dy * dy).sqrt()
    }

    fn observe(&mut self) -> Tensor {
        let mut o = vec![
            self.target[0] - self.pos[0],
            self.target[1] - self.pos[1],
            self.vel[0],
            self.vel[1],
        ];
        if self.obs_noise > 0.0 {
            for v in &mut o {
                *v += self.obs_noise * self.rng.sample::<f64, _>(rand_distr::StandardNormal);
            }
        }
        Tensor::from_op(vec![4], o)
    }
}

impl Default for PointReacherEnv {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for PointReacherEnv {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Tensor {
        self.rng = rng::stream(&[seed, 0x9EAC]);
        self.pos = [0.0, 0.0];
        self.vel = [0.0, 0.0];
        let angle = self.rng.gen_range(0.0..std::f64::consts::TAU);
        let dist = self
            .rng
            .gen_range(TARGET_DIST_RANGE.0..TARGET_DIST_RANGE.1);
        self.target = [dist * angle.cos(), dist * angle.sin()];
        self.steps = 0;
        self.observe()
    }

    fn step(&mut self, action: &Tensor) -> Result<StepOutcome> {
        check_action_bounds(action, 2)?;
        let a = action.data();
        for i in 0..2 {
            self.vel[i] = VELOCITY_DAMPING * self.vel[i] + ACCEL_GAIN * a[i] * DT;
            self.pos[i] += self.vel[i] * DT;
        }
        self.steps += 1;
        Ok(StepOutcome {
            observation: self.observe(),
            reward: -self.distance(),
            done: self.steps >= self.spec.episode_length,
        })
    }

    fn state_vec(&self) -> Vec<f64> {
        vec![
            self.pos[0],
            self.pos[1],
            self.vel[0],
            self.vel[1],
            self.target[0],
            self.target[1],
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn initial_target_distance_within_documented_range() {
        let mut env = PointReacherEnv::new();
        for seed in 0..200 {
            env.reset(seed);
            let d = env.distance();
            assert!(
                (TARGET_DIST_RANGE.0..TARGET_DIST_RANGE.1).contains(&d),
                "seed {seed}: distance {d}"
            );
        }
    }

    #[test]
    fn reward_is_negative_distance() {
        let mut env = PointReacherEnv::new();
        env.reset(3);
        let out = env.step(&Tensor::vector(vec![0.2, -0.2]).unwrap()).unwrap();
        assert!((out.reward + env.distance()).abs() < 1e-12);
        assert!(out.reward < 0.0);
    }

    #[test]
    fn constant_thrust_toward_target_reduces_distance() {
        let mut env = PointReacherEnv::new();
        env.reset(5);
        let d0 = env.distance();
        let dir = env.target;
        let norm = (dir[0] * dir[0] + dir[1] * dir[1]).sqrt();
        let action = Tensor::vector(vec![dir[0] / norm, dir[1] / norm]).unwrap();
        for _ in 0..10 {
            env.step(&action).unwrap();
        }
        assert!(env.distance() < d0);
    }
}
