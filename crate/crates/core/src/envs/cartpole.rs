//! Cartpole swingup analog, dense and sparse variants, and a scripted
//! swingup controller (energy pumping plus a linear balance law) used as a
//! competent reference policy in tests and benchmarks.
//!
//! The pole angle is measured from upright; episodes start hanging
//! (theta ~ pi). There is no rail limit; dynamics stay smooth everywhere so
//! the same equations can run on the autodiff tape.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tensor;
use crate::envs::{check_action_bounds, EnvSpec, Environment, Sparsity, StepOutcome};
use crate::error::Result;
use crate::rng;

/// Physical constants, shared by the environment, the scripted controller,
/// and the differentiable true-dynamics planning adapter.
#[derive(Clone, Debug)]
pub struct CartpoleConstants {
    pub cart_mass: f64,
    pub pole_mass: f64,
    pub pole_length: f64,
    pub gravity: f64,
    pub dt: f64,
    pub force_gain: f64,
}

pub const CARTPOLE: CartpoleConstants = CartpoleConstants {
    cart_mass: 1.0,
    pole_mass: 0.1,
    pole_length: 0.5,
    gravity: 9.8,
    dt: 0.02,
    force_gain: 4.0,
};

/// cos(15 degrees): the sparse-reward upright window.
pub const UPRIGHT_COS_THRESHOLD: f64 = 0.9659258262890683;

/// One Euler step of the standard cartpole equations.
/// State layout: [x, x_dot, theta, theta_dot], control u in [-1, 1].
pub fn cartpole_dynamics(c: &CartpoleConstants, s: [f64; 4], u: f64) -> [f64; 4] {
    let [x, xd, th, thd] = s;
    let f = c.force_gain * u;
    let (sin, cos) = th.sin_cos();
    let total_mass = c.cart_mass + c.pole_mass;
    let tmp = (f + c.pole_mass * c.pole_length * thd * thd * sin) / total_mass;
    let thdd = (c.gravity * sin - cos * tmp)
        / (c.pole_length * (4.0 / 3.0 - c.pole_mass * cos * cos / total_mass));
    let xdd = tmp - c.pole_mass * c.pole_length * thdd * cos / total_mass;
    [
        x + c.dt * xd,
        xd + c.dt * xdd,
        th + c.dt * thd,
        thd + c.dt * thdd,
    ]
}

pub struct CartpoleEnv {
    spec: EnvSpec,
    consts: CartpoleConstants,
    state: [f64; 4],
    steps: usize,
    rng: ChaCha8Rng,
    obs_noise: f64,
}

impl CartpoleEnv {
    fn new(name: &str, sparsity: Sparsity, action_repeat: usize) -> Self {
        Self {
            spec: EnvSpec {
                name: name.into(),
                obs_dim: 5,
                action_dim: 1,
                sparsity,
                episode_length: 1000,
                action_repeat,
            },
            consts: CARTPOLE.clone(),
            state: [0.0, 0.0, std::f64::consts::PI, 0.0],
            steps: 0,
            rng: rng::stream(&[0]),
            obs_noise: 0.01,
        }
    }

    pub fn dense() -> Self {
        Self::new("cartpole_swingup", Sparsity::Dense, 8)
    }

    pub fn sparse() -> Self {
        Self::new("cartpole_swingup_sparse", Sparsity::Sparse, 8)
    }

    pub fn with_episode_length(mut self, len: usize) -> Self {
        self.spec.episode_length = len;
        self
    }

    pub fn without_observation_noise(mut self) -> Self {
        self.obs_noise = 0.0;
        self
    }

    pub fn constants(&self) -> &CartpoleConstants {
        &self.consts
    }

    pub fn reward_of_state(&self, state: &[f64; 4]) -> f64 {
        let c = state[2].cos();
        match self.spec.sparsity {
            Sparsity::Dense => c,
            Sparsity::Sparse => {
                if c >= UPRIGHT_COS_THRESHOLD {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Start from an exact state (oracle and planner tests).
    pub fn reset_to(&mut self, state: [f64; 4]) -> Tensor {
        self.state = state;
        self.steps = 0;
        self.observe()
    }

    fn observe(&mut self) -> Tensor {
        let [x, xd, th, thd] = self.state;
        let mut o = vec![x, xd, th.cos(), th.sin(), thd];
        if self.obs_noise > 0.0 {
            for v in &mut o {
                *v += self.obs_noise * self.rng.sample::<f64, _>(rand_distr::StandardNormal);
            }
        }
        Tensor::from_op(vec![5], o)
    }
}

impl Environment for CartpoleEnv {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Tensor {
        self.rng = rng::stream(&[seed, 0xCA57]);
        self.state = [
            self.rng.gen_range(-0.1..0.1),
            0.0,
            std::f64::consts::PI + self.rng.gen_range(-0.1..0.1),
            self.rng.gen_range(-0.05..0.05),
        ];
        self.steps = 0;
        self.observe()
    }

    fn step(&mut self, action: &Tensor) -> Result<StepOutcome> {
        check_action_bounds(action, 1)?;
        self.state = cartpole_dynamics(&self.consts, self.state, action.data()[0]);
        self.steps += 1;
        Ok(StepOutcome {
            observation: self.observe(),
            reward: self.reward_of_state(&self.state.clone()),
            done: self.steps >= self.spec.episode_length,
        })
    }

    fn state_vec(&self) -> Vec<f64> {
        self.state.to_vec()
    }
}

fn wrap_angle(th: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut w = (th + std::f64::consts::PI) % two_pi;
    if w < 0.0 {
        w += two_pi;
    }
    w - std::f64::consts::PI
}

/// Balance gains: discrete LQR for the dynamics linearized at upright
/// (force_gain 4), state weights diag(0.003, 0.02, 8, 1), control weight
/// 0.05. The small cart weights keep recentering from saturating the
/// balance control right after capture.
pub const BALANCE_GAINS: [f64; 4] = [
    -0.18182552798744298,
    -0.8383345721267881,
    -15.61303489174667,
    -4.676387356748666,
];

/// Energy-shaping swingup with a hysteretic handoff to the balance law.
/// Competent on the swingup task from the standard reset distribution.
#[derive(Clone, Debug)]
pub struct ScriptedSwingup {
    consts: CartpoleConstants,
    energy_gain: f64,
    catch_angle: f64,
    catch_rate: f64,
    exit_angle: f64,
    balancing: bool,
}

impl ScriptedSwingup {
    pub fn new() -> Self {
        Self {
            consts: CARTPOLE.clone(),
            energy_gain: 2.0,
            catch_angle: 0.3,
            catch_rate: 1.8,
            exit_angle: 0.6,
            balancing: false,
        }
    }

    /// Pole energy relative to the upright rest (zero at the swingup target).
    fn pole_energy(&self, thw: f64, thd: f64) -> f64 {
        let c = &self.consts;
        0.5 * c.pole_mass * (c.pole_length * thd).powi(2)
            + c.pole_mass * c.gravity * c.pole_length * (thw.cos() - 1.0)
    }

    pub fn act(&mut self, state: &[f64; 4]) -> f64 {
        let [x, xd, th, thd] = *state;
        let thw = wrap_angle(th);
        if self.balancing {
            if thw.abs() > self.exit_angle {
                self.balancing = false;
            }
        } else if thw.abs() < self.catch_angle && thd.abs() < self.catch_rate {
            self.balancing = true;
        }
        let u = if self.balancing {
            let k = BALANCE_GAINS;
            -(k[0] * x + k[1] * xd + k[2] * thw + k[3] * thd)
        } else {
            self.energy_gain * self.pole_energy(thw, thd) * (thd * thw.cos())
        };
        u.clamp(-1.0, 1.0)
    }

    pub fn reset(&mut self) {
        self.balancing = false;
    }
}

impl Default for ScriptedSwingup {
    fn default() -> Self {
        Self::new()
    }
}
