//! Ground-truth dynamics as differentiable imagination models, for planner
//! verification against analytic optima and for value-guided refinement on
//! the real system.

use crate::agents::ValueParams;
use crate::autodiff::{NodeId, Tape, Tensor};
use crate::envs::cartpole::{CartpoleConstants, UPRIGHT_COS_THRESHOLD};
use crate::envs::lqr::LqrConstants;
use crate::error::Result;
use crate::planners::{ImaginationModel, Policy, StateObjective};

/// The LQR system as an imagination model. State nodes: [x, previous
/// action]; the objective charges the post-step quadratic cost, so summed
/// imagined returns equal the environment's accumulated reward exactly.
pub struct LqrTrueModel {
    pub consts: LqrConstants,
    pub x0: [f64; 2],
}

impl LqrTrueModel {
    pub fn new(consts: LqrConstants, x0: [f64; 2]) -> Self {
        Self { consts, x0 }
    }

    fn mat_node(tape: &mut Tape, m: &[[f64; 2]; 2], transpose: bool) -> NodeId {
        let d = if transpose {
            vec![m[0][0], m[1][0], m[0][1], m[1][1]]
        } else {
            vec![m[0][0], m[0][1], m[1][0], m[1][1]]
        };
        tape.leaf(Tensor::from_op(vec![2, 2], d))
    }
}

impl ImaginationModel for LqrTrueModel {
    fn action_dim(&self) -> usize {
        2
    }

    fn lift_start(&self, tape: &mut Tape, candidates: usize) -> Result<Vec<NodeId>> {
        let x = Tensor::from_op(vec![1, 2], self.x0.to_vec()).tile_rows(candidates);
        let u = Tensor::zeros(&[candidates, 2]);
        Ok(vec![tape.leaf(x), tape.leaf(u)])
    }

    fn step(&self, tape: &mut Tape, state: &[NodeId], action: NodeId) -> Result<Vec<NodeId>> {
        // row convention: x' = x A^T + u B^T
        let at = Self::mat_node(tape, &self.consts.a, true);
        let bt = Self::mat_node(tape, &self.consts.b, true);
        let xa = tape.matmul(state[0], at)?;
        let ub = tape.matmul(action, bt)?;
        let x_next = tape.add(xa, ub)?;
        Ok(vec![x_next, action])
    }
}

impl StateObjective for LqrTrueModel {
    fn eval(&self, tape: &mut Tape, state: &[NodeId]) -> Result<NodeId> {
        let q = Self::mat_node(tape, &self.consts.q, true);
        let r = Self::mat_node(tape, &self.consts.r, true);
        let xq = tape.matmul(state[0], q)?;
        let xqx = tape.mul(xq, state[0])?;
        let state_cost = tape.sum_cols(xqx);
        let ur = tape.matmul(state[1], r)?;
        let uru = tape.mul(ur, state[1])?;
        let action_cost = tape.sum_cols(uru);
        let total = tape.add(state_cost, action_cost)?;
        Ok(tape.scale(total, -1.0))
    }
}

/// The cartpole as an imagination model: one [J, 4] state node holding
/// [x, x_dot, theta, theta_dot]; smooth Euler dynamics identical to the
/// environment's.
pub struct CartpoleTrueModel {
    pub consts: CartpoleConstants,
    pub start: [f64; 4],
    pub sparse_reward: bool,
    /// Physics substeps per plan action (the action-repeat the agent sees).
    pub substeps: usize,
}

impl CartpoleTrueModel {
    pub fn new(consts: CartpoleConstants, start: [f64; 4], sparse_reward: bool) -> Self {
        Self {
            consts,
            start,
            sparse_reward,
            substeps: 1,
        }
    }

    fn substep(&self, tape: &mut Tape, state: NodeId, action: NodeId) -> Result<NodeId> {
        let c = &self.consts;
        let total_mass = c.cart_mass + c.pole_mass;
        let x = tape.slice_cols(state, 0, 1)?;
        let xd = tape.slice_cols(state, 1, 2)?;
        let th = tape.slice_cols(state, 2, 3)?;
        let thd = tape.slice_cols(state, 3, 4)?;

        let f = tape.scale(action, c.force_gain);
        let sin = tape.sin(th);
        let cos = tape.cos(th);
        let thd_sq = tape.square(thd);
        let swing = tape.mul(thd_sq, sin)?;
        let swing_term = tape.scale(swing, c.pole_mass * c.pole_length);
        let f_plus = tape.add(f, swing_term)?;
        let tmp = tape.scale(f_plus, 1.0 / total_mass);

        let cos_sq = tape.square(cos);
        let cos_term = tape.scale(cos_sq, -c.pole_mass / total_mass);
        let denom_inner = tape.add_scalar(cos_term, 4.0 / 3.0);
        let denom = tape.scale(denom_inner, c.pole_length);
        let g_sin = tape.scale(sin, c.gravity);
        let cos_tmp = tape.mul(cos, tmp)?;
        let neg_cos_tmp = tape.scale(cos_tmp, -1.0);
        let num = tape.add(g_sin, neg_cos_tmp)?;
        let thdd = tape.div(num, denom)?;

        let thdd_cos = tape.mul(thdd, cos)?;
        let pole_back = tape.scale(thdd_cos, -c.pole_mass * c.pole_length / total_mass);
        let xdd = tape.add(tmp, pole_back)?;

        let dxd = tape.scale(xd, c.dt);
        let x_next = tape.add(x, dxd)?;
        let dxdd = tape.scale(xdd, c.dt);
        let xd_next = tape.add(xd, dxdd)?;
        let dthd = tape.scale(thd, c.dt);
        let th_next = tape.add(th, dthd)?;
        let dthdd = tape.scale(thdd, c.dt);
        let thd_next = tape.add(thd, dthdd)?;
        tape.concat_cols(&[x_next, xd_next, th_next, thd_next])
    }
}

impl ImaginationModel for CartpoleTrueModel {
    fn action_dim(&self) -> usize {
        1
    }

    fn lift_start(&self, tape: &mut Tape, candidates: usize) -> Result<Vec<NodeId>> {
        let s = Tensor::from_op(vec![1, 4], self.start.to_vec()).tile_rows(candidates);
        Ok(vec![tape.leaf(s)])
    }

    fn step(&self, tape: &mut Tape, state: &[NodeId], action: NodeId) -> Result<Vec<NodeId>> {
        let mut s = state[0];
        for _ in 0..self.substeps.max(1) {
            s = self.substep(tape, s, action)?;
        }
        Ok(vec![s])
    }
}

impl StateObjective for CartpoleTrueModel {
    fn eval(&self, tape: &mut Tape, state: &[NodeId]) -> Result<NodeId> {
        let th = tape.slice_cols(state[0], 2, 3)?;
        let cos = tape.cos(th);
        if self.sparse_reward {
            // indicator reward: flat almost everywhere, zero gradient
            Ok(tape.ge_const(cos, UPRIGHT_COS_THRESHOLD))
        } else {
            Ok(cos)
        }
    }
}

/// Cartpole feature map [x, x_dot, sin theta, cos theta, theta_dot] feeding
/// a learned value net, as a planning objective over true-model states.
pub struct CartpoleValueObjective<'a> {
    pub value: &'a ValueParams,
}

pub fn cartpole_features(tape: &mut Tape, state: NodeId) -> Result<NodeId> {
    let x = tape.slice_cols(state, 0, 1)?;
    let xd = tape.slice_cols(state, 1, 2)?;
    let th = tape.slice_cols(state, 2, 3)?;
    let thd = tape.slice_cols(state, 3, 4)?;
    let sin = tape.sin(th);
    let cos = tape.cos(th);
    tape.concat_cols(&[x, xd, sin, cos, thd])
}

impl StateObjective for CartpoleValueObjective<'_> {
    fn eval(&self, tape: &mut Tape, state: &[NodeId]) -> Result<NodeId> {
        let feat = cartpole_features(tape, state[0])?;
        let nodes = self.value.net.lift(tape);
        self.value.net.forward_nodes(tape, &nodes, feat)
    }
}

/// A controller over raw cartpole states behind the planner's policy
/// interface. Carries its own mode state (capture hysteresis), so one
/// instance must be used consistently within an episode.
pub struct CartpolePolicy<F> {
    pub controller: F,
}

impl<F: FnMut(&[f64; 4]) -> f64> Policy for CartpolePolicy<F> {
    fn act(&mut self, state: &[Tensor]) -> Result<Tensor> {
        let d = state[0].data();
        let s = [d[0], d[1], d[2], d[3]];
        let u = (self.controller)(&s).clamp(-1.0, 1.0);
        Ok(Tensor::from_op(vec![1, 1], vec![u]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::cartpole::{cartpole_dynamics, CARTPOLE};
    use crate::envs::lqr::{LqrEnv, LQR, LQR_EVAL_X0};
    use crate::envs::Environment;
    use crate::planners::imagine_return;
    use crate::rng;

    #[test]
    fn lqr_imagined_return_matches_environment_rollout() {
        let model = LqrTrueModel::new(LQR.clone(), LQR_EVAL_X0);
        let mut r = rng::stream(&[61]);
        let horizon = 12;
        let plan_data: Vec<Tensor> = (0..horizon)
            .map(|_| rng::uniform_tensor(&mut r, &[1, 2], -1.0, 1.0))
            .collect();

        let mut tape = Tape::new();
        let plan: Vec<NodeId> = plan_data.iter().map(|t| tape.leaf(t.clone())).collect();
        let ret = imagine_return(&mut tape, &model, &model, &plan, 1, 1.0, None).unwrap();
        let imagined = tape.value(ret).item();

        let mut env = LqrEnv::new();
        env.reset_to(LQR_EVAL_X0);
        let mut actual = 0.0;
        for a in &plan_data {
            let out = env
                .step(&Tensor::vector(a.data().to_vec()).unwrap())
                .unwrap();
            actual += out.reward;
        }
        assert!(
            (imagined - actual).abs() < 1e-10,
            "imagined {imagined} vs env {actual}"
        );
    }

    #[test]
    fn cartpole_tape_step_matches_plain_dynamics() {
        let model = CartpoleTrueModel::new(CARTPOLE.clone(), [0.1, -0.2, 2.8, 0.4], false);
        let mut tape = Tape::new();
        let s0 = model.lift_start(&mut tape, 1).unwrap();
        let a = tape.leaf(Tensor::from_op(vec![1, 1], vec![0.63]));
        let s1 = model.step(&mut tape, &s0, a).unwrap();
        let expected = cartpole_dynamics(&CARTPOLE, [0.1, -0.2, 2.8, 0.4], 0.63);
        let got = tape.value(s1[0]).data();
        for (g, e) in got.iter().zip(&expected) {
            assert!((g - e).abs() < 1e-14, "{got:?} vs {expected:?}");
        }
    }

    #[test]
    fn sparse_reward_indicator_has_zero_gradient() {
        let model = CartpoleTrueModel::new(CARTPOLE.clone(), [0.0, 0.0, 0.1, 0.0], true);
        let mut tape = Tape::new();
        let s0 = model.lift_start(&mut tape, 1).unwrap();
        let a = tape.leaf(Tensor::from_op(vec![1, 1], vec![0.3]));
        let s1 = model.step(&mut tape, &s0, a).unwrap();
        let r = model.eval(&mut tape, &s1).unwrap();
        assert_eq!(tape.value(r).item(), 1.0); // 0.1 rad is inside the window
        let root = tape.sum(r);
        let g = tape.backward(root).unwrap();
        assert_eq!(g.get_or_zeros(a, &[1, 1]).data(), &[0.0]);
    }
}
