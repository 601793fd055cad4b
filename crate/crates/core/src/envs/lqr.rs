//! Linear-quadratic regulator environment with an exact finite-horizon
//! solution via the backward Riccati recursion. Serves as the analytic
//! oracle for planner verification.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tensor;
use crate::envs::{check_action_bounds, EnvSpec, Environment, Sparsity, StepOutcome};
use crate::error::Result;
use crate::rng;

/// Fixed system matrices: x' = A x + B u with stage cost
/// x'^T Q x' + u^T R u charged on the post-step state.
#[derive(Clone, Debug)]
pub struct LqrConstants {
    pub a: [[f64; 2]; 2],
    pub b: [[f64; 2]; 2],
    pub q: [[f64; 2]; 2],
    pub r: [[f64; 2]; 2],
}

/// A = 0.7 * rotation(0.4 rad), B = 0.8 * [[1, 0.2], [-0.1, 1]],
/// Q = I, R = 2 I. With these constants the cost Hessian over a length-12
/// action sequence has eigenvalues in roughly [4.4, 15] and the
/// unconstrained optimum stays well inside the [-1, 1] action box.
pub const LQR: LqrConstants = LqrConstants {
    a: [
        [0.7 * 0.9210609940028851, 0.7 * -0.3894183423086505],
        [0.7 * 0.3894183423086505, 0.7 * 0.9210609940028851],
    ],
    b: [[0.8, 0.16], [-0.08, 0.8]],
    q: [[1.0, 0.0], [0.0, 1.0]],
    r: [[2.0, 0.0], [0.0, 2.0]],
};

/// Default evaluation x0 (documented constant used by the oracle runs).
pub const LQR_EVAL_X0: [f64; 2] = [0.9, -0.7];

fn mat_vec(m: &[[f64; 2]; 2], v: [f64; 2]) -> [f64; 2] {
    [
        m[0][0] * v[0] + m[0][1] * v[1],
        m[1][0] * v[0] + m[1][1] * v[1],
    ]
}

fn quad_form(m: &[[f64; 2]; 2], v: [f64; 2]) -> f64 {
    let mv = mat_vec(m, v);
    v[0] * mv[0] + v[1] * mv[1]
}

fn mat_mul(a: &[[f64; 2]; 2], b: &[[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

fn mat_add(a: &[[f64; 2]; 2], b: &[[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][j] + b[i][j];
        }
    }
    out
}

fn transpose(a: &[[f64; 2]; 2]) -> [[f64; 2]; 2] {
    [[a[0][0], a[1][0]], [a[0][1], a[1][1]]]
}

fn solve2(m: &[[f64; 2]; 2], rhs: &[[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let inv = [
        [m[1][1] / det, -m[0][1] / det],
        [-m[1][0] / det, m[0][0] / det],
    ];
    mat_mul(&inv, rhs)
}

/// Exact finite-horizon optimum from `x0` over `horizon` steps, by the
/// backward Riccati recursion with zero terminal weight:
///
///   P_H = 0,  M = Q + P_{t+1},
///   K_t = (R + B^T M B)^{-1} B^T M A,
///   P_t = A^T M (A - B K_t).
///
/// Returns the optimal cost x0^T P_0 x0 and the optimal open-loop actions.
pub fn lqr_optimal(consts: &LqrConstants, x0: [f64; 2], horizon: usize) -> (f64, Vec<[f64; 2]>) {
    let bt = transpose(&consts.b);
    let at = transpose(&consts.a);
    let mut p = [[0.0; 2]; 2];
    let mut gains = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let m = mat_add(&consts.q, &p);
        let btm = mat_mul(&bt, &m);
        let lhs = mat_add(&consts.r, &mat_mul(&btm, &consts.b));
        let rhs = mat_mul(&btm, &consts.a);
        let k = solve2(&lhs, &rhs);
        let a_minus_bk = mat_add(&consts.a, &neg(&mat_mul(&consts.b, &k)));
        p = mat_mul(&mat_mul(&at, &m), &a_minus_bk);
        gains.push(k);
    }
    gains.reverse();
    let cost = quad_form(&p, x0);
    let mut x = x0;
    let mut actions = Vec::with_capacity(horizon);
    for k in &gains {
        let u = neg_vec(mat_vec(k, x));
        actions.push(u);
        x = add_vec(mat_vec(&consts.a, x), mat_vec(&consts.b, u));
    }
    (cost, actions)
}

fn neg(a: &[[f64; 2]; 2]) -> [[f64; 2]; 2] {
    [[-a[0][0], -a[0][1]], [-a[1][0], -a[1][1]]]
}

fn neg_vec(v: [f64; 2]) -> [f64; 2] {
    [-v[0], -v[1]]
}

fn add_vec(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] + b[0], a[1] + b[1]]
}

/// The environment itself. Observations are the exact state (no noise) so
/// the true linear model can be supplied as the world model.
pub struct LqrEnv {
    spec: EnvSpec,
    consts: LqrConstants,
    x: [f64; 2],
    steps: usize,
}

impl LqrEnv {
    pub fn new() -> Self {
        Self {
            spec: EnvSpec {
                name: "lqr".into(),
                obs_dim: 2,
                action_dim: 2,
                sparsity: Sparsity::Dense,
                episode_length: 12,
                action_repeat: 1,
            },
            consts: LQR.clone(),
            x: LQR_EVAL_X0,
            steps: 0,
        }
    }

    pub fn constants(&self) -> &LqrConstants {
        &self.consts
    }

    pub fn set_episode_length(&mut self, len: usize) {
        self.spec.episode_length = len;
    }

    /// Start from an exact state instead of a seed (oracle comparisons).
    pub fn reset_to(&mut self, x0: [f64; 2]) -> Tensor {
        self.x = x0;
        self.steps = 0;
        Tensor::from_op(vec![2], self.x.to_vec())
    }

    /// Seeded initial state: uniform direction, radius in [0.6, 1.1].
    pub fn sample_x0(seed: u64) -> [f64; 2] {
        let mut r: ChaCha8Rng = rng::stream(&[seed, 0x10A]);
        let angle = r.gen_range(0.0..std::f64::consts::TAU);
        let radius = r.gen_range(0.6..1.1);
        [radius * angle.cos(), radius * angle.sin()]
    }
}

impl Default for LqrEnv {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for LqrEnv {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Tensor {
        self.reset_to(Self::sample_x0(seed))
    }

    fn step(&mut self, action: &Tensor) -> Result<StepOutcome> {
        check_action_bounds(action, 2)?;
        let u = [action.data()[0], action.data()[1]];
        self.x = add_vec(mat_vec(&self.consts.a, self.x), mat_vec(&self.consts.b, u));
        self.steps += 1;
        let cost = quad_form(&self.consts.q, self.x) + quad_form(&self.consts.r, u);
        Ok(StepOutcome {
            observation: Tensor::from_op(vec![2], self.x.to_vec()),
            reward: -cost,
            done: self.steps >= self.spec.episode_length,
        })
    }

    fn state_vec(&self) -> Vec<f64> {
        self.x.to_vec()
    }
}
