//! Ball interception analog: a ball drops under gravity on a schedule of
//! seeded launches; a 2-D velocity-controlled cup must be under it at the
//! right moment. Reward 1 fires only on the catch step, after which the
//! next launch begins, so random policies see reward 0 almost always.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tensor;
use crate::envs::{check_action_bounds, EnvSpec, Environment, Sparsity, StepOutcome};
use crate::error::Result;
use crate::rng;

const DT: f64 = 0.02;
const GRAVITY: f64 = 2.5;
const CUP_GAIN: f64 = 1.5;
const CUP_DAMPING: f64 = 0.9;
const CATCH_HALF_WIDTH: f64 = 0.12;
const CATCH_HALF_HEIGHT: f64 = 0.08;
const BALL_START_Y: f64 = 1.2;

pub struct CupCatchEnv {
    spec: EnvSpec,
    cup: [f64; 4],  // x, y, vx, vy
    ball: [f64; 4], // x, y, vx, vy
    steps: usize,
    rng: ChaCha8Rng,
    obs_noise: f64,
}

impl CupCatchEnv {
    pub fn new() -> Self {
        Self {
            spec: EnvSpec {
                name: "cup_catch".into(),
                obs_dim: 8,
                action_dim: 2,
                sparsity: Sparsity::Sparse,
                episode_length: 1000,
                action_repeat: 6,
            },
            cup: [0.0; 4],
            ball: [0.0; 4],
            steps: 0,
            rng: rng::stream(&[0]),
            obs_noise: 0.01,
        }
    }

    pub fn set_episode_length(&mut self, len: usize) {
        self.spec.episode_length = len;
    }

    fn launch_ball(&mut self) {
        self.ball = [
            self.rng.gen_range(-0.8..0.8),
            BALL_START_Y,
            self.rng.gen_range(-0.3..0.3),
            0.0,
        ];
    }

    fn observe(&mut self) -> Tensor {
        let mut o = vec![
            self.cup[0], self.cup[1], self.cup[2], self.cup[3], self.ball[0], self.ball[1],
            self.ball[2], self.ball[3],
        ];
        if self.obs_noise > 0.0 {
            for v in &mut o {
                *v += self.obs_noise * self.rng.sample::<f64, _>(rand_distr::StandardNormal);
            }
        }
        Tensor::from_op(vec![8], o)
    }
}

impl Default for CupCatchEnv {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for CupCatchEnv {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Tensor {
        self.rng = rng::stream(&[seed, 0xC0B]);
        self.cup = [self.rng.gen_range(-0.2..0.2), 0.0, 0.0, 0.0];
        self.launch_ball();
        self.steps = 0;
        self.observe()
    }

    fn step(&mut self, action: &Tensor) -> Result<StepOutcome> {
        check_action_bounds(action, 2)?;
        let a = action.data();
        for i in 0..2 {
            self.cup[2 + i] = CUP_DAMPING * self.cup[2 + i] + CUP_GAIN * a[i] * DT;
            self.cup[i] += self.cup[2 + i] * DT;
        }
        self.cup[0] = self.cup[0].clamp(-1.0, 1.0);
        self.cup[1] = self.cup[1].clamp(-0.3, 0.8);

        self.ball[3] -= GRAVITY * DT;
        self.ball[0] += self.ball[2] * DT;
        self.ball[1] += self.ball[3] * DT;

        let caught = self.ball[3] < 0.0
            && (self.ball[0] - self.cup[0]).abs() < CATCH_HALF_WIDTH
            && (self.ball[1] - self.cup[1]).abs() < CATCH_HALF_HEIGHT;
        let missed = self.ball[1] < -0.5;
        let reward = if caught { 1.0 } else { 0.0 };
        if caught || missed {
            self.launch_ball();
        }

        self.steps += 1;
        Ok(StepOutcome {
            observation: self.observe(),
            reward,
            done: self.steps >= self.spec.episode_length,
        })
    }

    fn state_vec(&self) -> Vec<f64> {
        let mut s = self.cup.to_vec();
        s.extend_from_slice(&self.ball);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_policy_rarely_scores() {
        let mut env = CupCatchEnv::new();
        let mut r = rng::stream(&[5]);
        let mut rewarded = 0usize;
        let mut total = 0usize;
        for seed in 0..5 {
            env.reset(seed);
            for _ in 0..1000 {
                let a = rng::uniform_tensor(&mut r, &[2], -1.0, 1.0);
                let out = env.step(&a).unwrap();
                total += 1;
                if out.reward > 0.0 {
                    rewarded += 1;
                }
            }
        }
        assert!(
            (rewarded as f64) < 0.05 * total as f64,
            "{rewarded}/{total} steps rewarded"
        );
    }

    #[test]
    fn stationary_cup_catches_a_ball_dropped_onto_it() {
        let mut env = CupCatchEnv::new();
        env.reset(1);
        env.obs_noise = 0.0;
        // place the ball directly above the cup with no lateral motion
        env.ball = [env.cup[0], 0.6, 0.0, 0.0];
        let zero = Tensor::vector(vec![0.0, 0.0]).unwrap();
        let mut caught = false;
        for _ in 0..200 {
            if env.step(&zero).unwrap().reward > 0.0 {
                caught = true;
                break;
            }
        }
        assert!(caught);
    }
}
