//! Finite-difference verification of the reverse-mode engine. Each check
//! compares the tape's directional derivative against a central difference
//! of the same forward function, over seeded random inputs and directions.
//!
//! The differencing side reuses only the forward evaluation path, keeping
//! it independent of the backward pass it certifies.


use crate::autodiff::{
    diagonal_gaussian_kl, gaussian_log_density, gaussian_sample, gru_cell, GruNodes, NodeId, Tape,
    Tensor,
};
use crate::error::Result;
use crate::planners::{imagine_return, RssmImagination, RssmRewardObjective};
use crate::rng::{self, normal_tensor};
use crate::world_model::{
    elbo_loss_nodes, ChunkBatch, LatentNodes, LatentState, RssmConfig, RssmParams,
};

pub const FD_STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
/// Looser bound for composed stochastic graphs (fixed reparameterization).
pub const TOLERANCE_COMPOSED: f64 = 1e-3;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub name: String,
    pub cases: usize,
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

/// A differentiable scalar function of a list of input tensors.
trait Case {
    fn eval(&self, inputs: &[Tensor]) -> f64;
    fn grad(&self, inputs: &[Tensor]) -> Vec<Tensor>;
}

fn rel_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

/// Compare <grad, dir> against a central difference along `dir`.
fn check_case(case: &dyn Case, inputs: &[Tensor], dirs: &[Tensor]) -> f64 {
    let grads = case.grad(inputs);
    let ad: f64 = grads
        .iter()
        .zip(dirs)
        .map(|(g, d)| g.data().iter().zip(d.data()).map(|(a, b)| a * b).sum::<f64>())
        .sum();
    let shift = |sign: f64| -> Vec<Tensor> {
        inputs
            .iter()
            .zip(dirs)
            .map(|(x, d)| {
                let data: Vec<f64> = x
                    .data()
                    .iter()
                    .zip(d.data())
                    .map(|(v, dv)| v + sign * FD_STEP * dv)
                    .collect();
                Tensor::from_op(x.shape().to_vec(), data)
            })
            .collect()
    };
    let fd = (case.eval(&shift(1.0)) - case.eval(&shift(-1.0))) / (2.0 * FD_STEP);
    rel_error(ad, fd)
}

/// Scalar-valued wrapper: builds a tape, applies `f` to leaf nodes, reduces
/// with a fixed random weighting so the root has non-uniform sensitivity.
struct OpCase<F> {
    f: F,
    weights: Tensor,
}

impl<F: Fn(&mut Tape, &[NodeId]) -> Result<NodeId>> OpCase<F> {
    fn root(&self, tape: &mut Tape, inputs: &[Tensor]) -> NodeId {
        let nodes: Vec<NodeId> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
        let out = (self.f)(tape, &nodes).expect("op failed during gradcheck");
        if tape.value(out).is_scalar() {
            return out;
        }
        let w = tape.leaf(self.weights.clone());
        let weighted = tape.mul(out, w).expect("weighting failed");
        tape.sum(weighted)
    }
}

impl<F: Fn(&mut Tape, &[NodeId]) -> Result<NodeId>> Case for OpCase<F> {
    fn eval(&self, inputs: &[Tensor]) -> f64 {
        let mut tape = Tape::new();
        let root = self.root(&mut tape, inputs);
        tape.value(root).item()
    }

    fn grad(&self, inputs: &[Tensor]) -> Vec<Tensor> {
        let mut tape = Tape::new();
        let nodes: Vec<NodeId> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
        let out = (self.f)(&mut tape, &nodes).expect("op failed during gradcheck");
        let root = if tape.value(out).is_scalar() {
            out
        } else {
            let w = tape.leaf(self.weights.clone());
            let weighted = tape.mul(out, w).expect("weighting failed");
            tape.sum(weighted)
        };
        let grads = tape.backward(root).expect("backward failed");
        nodes
            .iter()
            .zip(inputs)
            .map(|(&n, t)| grads.get_or_zeros(n, t.shape()))
            .collect()
    }
}

fn run_op_case<F>(
    name: &str,
    cases: usize,
    seed: u64,
    tolerance: f64,
    make_inputs: impl Fn(&mut rand_chacha::ChaCha8Rng) -> Vec<Tensor>,
    out_shape: impl Fn(&[Tensor]) -> Vec<usize>,
    f: F,
) -> GradCheckReport
where
    F: Fn(&mut Tape, &[NodeId]) -> Result<NodeId>,
{
    let mut max_err = 0.0f64;
    for c in 0..cases {
        let mut r = rng::stream(&[seed, 0x9C, c as u64]);
        let inputs = make_inputs(&mut r);
        let weights = normal_tensor(&mut r, &out_shape(&inputs));
        let case = OpCase { f: &f, weights };
        let dirs: Vec<Tensor> = inputs
            .iter()
            .map(|t| normal_tensor(&mut r, t.shape()))
            .collect();
        let wrapped = OpCaseRef { inner: &case };
        max_err = max_err.max(check_case(&wrapped, &inputs, &dirs));
    }
    GradCheckReport {
        name: name.to_string(),
        cases,
        max_rel_error: max_err,
        tolerance,
    }
}

struct OpCaseRef<'a, F> {
    inner: &'a OpCase<F>,
}

impl<F: Fn(&mut Tape, &[NodeId]) -> Result<NodeId>> Case for OpCaseRef<'_, F> {
    fn eval(&self, inputs: &[Tensor]) -> f64 {
        self.inner.eval(inputs)
    }
    fn grad(&self, inputs: &[Tensor]) -> Vec<Tensor> {
        self.inner.grad(inputs)
    }
}

fn away_from(t: Tensor, margin: f64) -> Tensor {
    // push entries away from zero so kinked ops stay differentiable
    let data: Vec<f64> = t
        .data()
        .iter()
        .map(|&v| if v.abs() < margin { v + margin * v.signum() + if v == 0.0 { margin } else { 0.0 } } else { v })
        .collect();
    Tensor::from_op(t.shape().to_vec(), data)
}

fn positive(t: Tensor, floor: f64) -> Tensor {
    let data: Vec<f64> = t.data().iter().map(|&v| v.abs() + floor).collect();
    Tensor::from_op(t.shape().to_vec(), data)
}

/// Run the full battery. `cases` random instances per op.
pub fn run_standard_checks(seed: u64, cases: usize) -> Vec<GradCheckReport> {
    let mut reports = Vec::new();
    let pair = |r: &mut rand_chacha::ChaCha8Rng| {
        vec![normal_tensor(r, &[3, 4]), normal_tensor(r, &[3, 4])]
    };
    let shape34 = |_: &[Tensor]| vec![3, 4];

    reports.push(run_op_case("add", cases, seed, TOLERANCE, pair, shape34, |t, n| {
        t.add(n[0], n[1])
    }));
    reports.push(run_op_case("add-bias", cases, seed, TOLERANCE,
        |r| vec![normal_tensor(r, &[3, 4]), normal_tensor(r, &[4])],
        shape34,
        |t, n| t.add(n[0], n[1]),
    ));
    reports.push(run_op_case("sub", cases, seed, TOLERANCE, pair, shape34, |t, n| {
        t.sub(n[0], n[1])
    }));
    reports.push(run_op_case("mul", cases, seed, TOLERANCE, pair, shape34, |t, n| {
        t.mul(n[0], n[1])
    }));
    reports.push(run_op_case("div", cases, seed, TOLERANCE,
        |r| vec![normal_tensor(r, &[3, 4]), away_from(normal_tensor(r, &[3, 4]), 0.5)],
        shape34,
        |t, n| t.div(n[0], n[1]),
    ));
    reports.push(run_op_case("matmul", cases, seed, TOLERANCE,
        |r| vec![normal_tensor(r, &[3, 5]), normal_tensor(r, &[5, 4])],
        shape34,
        |t, n| t.matmul(n[0], n[1]),
    ));
    let single = |r: &mut rand_chacha::ChaCha8Rng| vec![normal_tensor(r, &[3, 4])];
    reports.push(run_op_case("tanh", cases, seed, TOLERANCE, single, shape34, |t, n| {
        Ok(t.tanh(n[0]))
    }));
    reports.push(run_op_case("sigmoid", cases, seed, TOLERANCE, single, shape34, |t, n| {
        Ok(t.sigmoid(n[0]))
    }));
    reports.push(run_op_case("relu", cases, seed, TOLERANCE,
        |r| vec![away_from(normal_tensor(r, &[3, 4]), 0.05)],
        shape34,
        |t, n| Ok(t.relu(n[0])),
    ));
    reports.push(run_op_case("softplus", cases, seed, TOLERANCE, single, shape34, |t, n| {
        Ok(t.softplus(n[0]))
    }));
    reports.push(run_op_case("log", cases, seed, TOLERANCE,
        |r| vec![positive(normal_tensor(r, &[3, 4]), 0.2)],
        shape34,
        |t, n| Ok(t.log(n[0])),
    ));
    reports.push(run_op_case("square", cases, seed, TOLERANCE, single, shape34, |t, n| {
        Ok(t.square(n[0]))
    }));
    reports.push(run_op_case("sin", cases, seed, TOLERANCE, single, shape34, |t, n| {
        Ok(t.sin(n[0]))
    }));
    reports.push(run_op_case("cos", cases, seed, TOLERANCE, single, shape34, |t, n| {
        Ok(t.cos(n[0]))
    }));
    reports.push(run_op_case("sum", cases, seed, TOLERANCE, single, |_| vec![1], |t, n| {
        Ok(t.sum(n[0]))
    }));
    reports.push(run_op_case("mean", cases, seed, TOLERANCE, single, |_| vec![1], |t, n| {
        Ok(t.mean(n[0]))
    }));
    reports.push(run_op_case("sum-cols", cases, seed, TOLERANCE, single, |_| vec![3, 1], |t, n| {
        Ok(t.sum_cols(n[0]))
    }));
    reports.push(run_op_case("concat", cases, seed, TOLERANCE,
        |r| vec![normal_tensor(r, &[3, 2]), normal_tensor(r, &[3, 3])],
        |_| vec![3, 5],
        |t, n| t.concat_cols(&[n[0], n[1]]),
    ));
    reports.push(run_op_case("slice", cases, seed, TOLERANCE,
        |r| vec![normal_tensor(r, &[3, 6])],
        |_| vec![3, 3],
        |t, n| t.slice_cols(n[0], 1, 4),
    ));
    reports.push(run_op_case("clamp-min", cases, seed, TOLERANCE,
        |r| vec![away_from(normal_tensor(r, &[3, 4]), 0.05)],
        shape34,
        |t, n| Ok(t.clamp_min(n[0], 0.0)),
    ));

    // fixed-eps reparameterized sample
    reports.push(run_op_case("gaussian-sample", cases, seed, TOLERANCE,
        |r| vec![normal_tensor(r, &[2, 3]), positive(normal_tensor(r, &[2, 3]), 0.1)],
        |_| vec![2, 3],
        |t, n| {
            let eps = Tensor::from_op(vec![2, 3], vec![0.7, -1.2, 0.3, 1.8, -0.4, 0.9]);
            gaussian_sample(t, n[0], n[1], &eps)
        },
    ));
    reports.push(run_op_case("gaussian-log-density", cases, seed, TOLERANCE,
        |r| {
            vec![
                normal_tensor(r, &[2, 3]),
                normal_tensor(r, &[2, 3]),
                positive(normal_tensor(r, &[2, 3]), 0.2),
            ]
        },
        |_| vec![1],
        |t, n| gaussian_log_density(t, n[0], n[1], n[2]),
    ));
    reports.push(run_op_case("diagonal-gaussian-kl", cases, seed, TOLERANCE,
        |r| {
            vec![
                normal_tensor(r, &[2, 3]),
                positive(normal_tensor(r, &[2, 3]), 0.2),
                normal_tensor(r, &[2, 3]),
                positive(normal_tensor(r, &[2, 3]), 0.2),
            ]
        },
        |_| vec![1],
        |t, n| diagonal_gaussian_kl(t, n[0], n[1], n[2], n[3]),
    ));

    // GRU cell w.r.t. input, state, and all weight matrices
    reports.push(run_op_case("gru-cell", cases, seed, TOLERANCE,
        |r| {
            let (hidden, input) = (4, 3);
            vec![
                normal_tensor(r, &[2, input]),
                normal_tensor(r, &[2, hidden]),
                normal_tensor(r, &[input, 3 * hidden]),
                normal_tensor(r, &[hidden, 3 * hidden]),
                normal_tensor(r, &[3 * hidden]),
                normal_tensor(r, &[3 * hidden]),
            ]
        },
        |_| vec![2, 4],
        |t, n| {
            let w = GruNodes {
                w_x: n[2],
                w_h: n[3],
                b_x: n[4],
                b_h: n[5],
            };
            gru_cell(t, n[0], n[1], &w)
        },
    ));

    reports.push(rssm_step_check(seed, cases));
    reports.push(imagine_return_check(seed, cases));
    reports.push(elbo_param_check(seed, cases.min(20)));
    reports
}

fn tiny_rssm(seed: u64) -> RssmParams {
    RssmParams::init(
        RssmConfig {
            obs_dim: 3,
            action_dim: 2,
            belief_size: 6,
            state_size: 3,
            hidden_size: 6,
            embedding_size: 5,
            activation: crate::world_model::Activation::Tanh,
        },
        seed,
    )
}

/// Gradient of ||h'||^2 + ||prior mean||^2 w.r.t. the action.
fn rssm_step_check(seed: u64, cases: usize) -> GradCheckReport {
    let mut max_err = 0.0f64;
    for c in 0..cases {
        let mut r = rng::stream(&[seed, 0x55, c as u64]);
        let params = tiny_rssm(1000 + c as u64);
        let mut prev = LatentState::zero(&params.cfg, 1);
        prev.h = normal_tensor(&mut r, &[1, 6]);
        prev.s = normal_tensor(&mut r, &[1, 3]);
        let action = rng::uniform_tensor(&mut r, &[1, 2], -0.9, 0.9);
        let dir = normal_tensor(&mut r, &[1, 2]);

        let eval = |a: &Tensor| -> f64 {
            let mut tape = Tape::new();
            let p = params.lift(&mut tape);
            let act = params.cfg.activation;
            let prev_nodes = LatentNodes {
                h: tape.leaf(prev.h.clone()),
                s: tape.leaf(prev.s.clone()),
            };
            let an = tape.leaf(a.clone());
            let h = crate::world_model::deterministic_step(&mut tape, &p, act, &prev_nodes, an)
                .unwrap();
            let dist = crate::world_model::prior_dist(&mut tape, &p, act, h).unwrap();
            let h_sq = tape.square(h);
            let m_sq = tape.square(dist.mean);
            let a_sum = tape.sum(h_sq);
            let b_sum = tape.sum(m_sq);
            let root = tape.add(a_sum, b_sum).unwrap();
            tape.value(root).item()
        };
        let grad = {
            let mut tape = Tape::new();
            let p = params.lift(&mut tape);
            let act = params.cfg.activation;
            let prev_nodes = LatentNodes {
                h: tape.leaf(prev.h.clone()),
                s: tape.leaf(prev.s.clone()),
            };
            let an = tape.leaf(action.clone());
            let h = crate::world_model::deterministic_step(&mut tape, &p, act, &prev_nodes, an)
                .unwrap();
            let dist = crate::world_model::prior_dist(&mut tape, &p, act, h).unwrap();
            let h_sq = tape.square(h);
            let m_sq = tape.square(dist.mean);
            let a_sum = tape.sum(h_sq);
            let b_sum = tape.sum(m_sq);
            let root = tape.add(a_sum, b_sum).unwrap();
            let grads = tape.backward(root).unwrap();
            grads.get_or_zeros(an, &[1, 2])
        };
        let ad: f64 = grad
            .data()
            .iter()
            .zip(dir.data())
            .map(|(g, d)| g * d)
            .sum();
        let bump = |sign: f64| {
            let data: Vec<f64> = action
                .data()
                .iter()
                .zip(dir.data())
                .map(|(v, d)| v + sign * FD_STEP * d)
                .collect();
            Tensor::from_op(vec![1, 2], data)
        };
        let fd = (eval(&bump(1.0)) - eval(&bump(-1.0))) / (2.0 * FD_STEP);
        max_err = max_err.max(rel_error(ad, fd));
    }
    GradCheckReport {
        name: "rssm-step".into(),
        cases,
        max_rel_error: max_err,
        tolerance: TOLERANCE,
    }
}

/// Gradient of the imagined return w.r.t. the full action plan.
fn imagine_return_check(seed: u64, cases: usize) -> GradCheckReport {
    let mut max_err = 0.0f64;
    let horizon = 4;
    for c in 0..cases {
        let mut r = rng::stream(&[seed, 0x1F, c as u64]);
        let params = tiny_rssm(2000 + c as u64);
        let mut start = LatentState::zero(&params.cfg, 1);
        start.h = normal_tensor(&mut r, &[1, 6]);
        start.s = normal_tensor(&mut r, &[1, 3]);
        let plan: Vec<Tensor> = (0..horizon)
            .map(|_| rng::uniform_tensor(&mut r, &[1, 2], -0.9, 0.9))
            .collect();
        let dirs: Vec<Tensor> = (0..horizon).map(|_| normal_tensor(&mut r, &[1, 2])).collect();

        let eval = |plan: &[Tensor]| -> f64 {
            let model = RssmImagination::new(&params, &start);
            let objective = RssmRewardObjective { params: &params };
            let mut tape = Tape::new();
            let nodes: Vec<NodeId> = plan.iter().map(|t| tape.leaf(t.clone())).collect();
            let ret = imagine_return(&mut tape, &model, &objective, &nodes, 1, 0.97, None).unwrap();
            tape.value(ret).item()
        };
        let ad = {
            let model = RssmImagination::new(&params, &start);
            let objective = RssmRewardObjective { params: &params };
            let mut tape = Tape::new();
            let nodes: Vec<NodeId> = plan.iter().map(|t| tape.leaf(t.clone())).collect();
            let ret = imagine_return(&mut tape, &model, &objective, &nodes, 1, 0.97, None).unwrap();
            let root = tape.sum(ret);
            let grads = tape.backward(root).unwrap();
            nodes
                .iter()
                .zip(&dirs)
                .map(|(&n, d)| {
                    grads
                        .get_or_zeros(n, &[1, 2])
                        .data()
                        .iter()
                        .zip(d.data())
                        .map(|(g, dv)| g * dv)
                        .sum::<f64>()
                })
                .sum::<f64>()
        };
        let bump = |sign: f64| -> Vec<Tensor> {
            plan.iter()
                .zip(&dirs)
                .map(|(p, d)| {
                    let data: Vec<f64> = p
                        .data()
                        .iter()
                        .zip(d.data())
                        .map(|(v, dv)| v + sign * FD_STEP * dv)
                        .collect();
                    Tensor::from_op(vec![1, 2], data)
                })
                .collect()
        };
        let fd = (eval(&bump(1.0)) - eval(&bump(-1.0))) / (2.0 * FD_STEP);
        max_err = max_err.max(rel_error(ad, fd));
    }
    GradCheckReport {
        name: "imagine-return".into(),
        cases,
        max_rel_error: max_err,
        tolerance: TOLERANCE,
    }
}

/// Gradient of the training objective w.r.t. randomly probed parameters
/// (composed stochastic graph with fixed reparameterization draws).
fn elbo_param_check(seed: u64, cases: usize) -> GradCheckReport {
    let mut max_err = 0.0f64;
    for c in 0..cases {
        let mut r = rng::stream(&[seed, 0xE1B0, c as u64]);
        let mut params = tiny_rssm(3000 + c as u64);
        let t_len = 4;
        let batch = 2;
        let chunk = ChunkBatch {
            observations: (0..t_len).map(|_| normal_tensor(&mut r, &[batch, 3])).collect(),
            actions: (0..t_len)
                .map(|_| rng::uniform_tensor(&mut r, &[batch, 2], -0.9, 0.9))
                .collect(),
            rewards: (0..t_len).map(|_| normal_tensor(&mut r, &[batch, 1])).collect(),
        };
        let eps: Vec<Tensor> = (0..t_len - 1)
            .map(|_| normal_tensor(&mut r, &[batch, 3]))
            .collect();
        // use free_nats 0 so the KL path carries gradient
        let eval = |params: &RssmParams| -> f64 {
            let mut tape = Tape::new();
            let p = params.lift(&mut tape);
            let nodes = elbo_loss_nodes(&mut tape, &p, params, &chunk, 0.0, &eps).unwrap();
            tape.value(nodes.total).item()
        };
        // pick a parameter and an entry to probe
        let names = ["gru_wx", "pri_w2", "pos_w1", "obs_w2", "rew_w1", "enc_w1"];
        let name = names[c % names.len()];
        let ad = {
            let mut tape = Tape::new();
            let p = params.lift(&mut tape);
            let nodes = elbo_loss_nodes(&mut tape, &p, &params, &chunk, 0.0, &eps).unwrap();
            let grads = tape.backward(nodes.total).unwrap();
            let (_, id) = p.named().into_iter().find(|(n, _)| *n == name).unwrap();
            grads.get(id).map(|g| g.data()[0]).unwrap_or(0.0)
        };
        let probe = |delta: f64, params: &mut RssmParams| {
            use crate::autodiff::NamedTensors;
            params.visit_mut(&mut |n, t| {
                if n == name {
                    t.data_mut()[0] += delta;
                }
            });
        };
        probe(FD_STEP, &mut params);
        let up = eval(&params);
        probe(-2.0 * FD_STEP, &mut params);
        let down = eval(&params);
        probe(FD_STEP, &mut params);
        let fd = (up - down) / (2.0 * FD_STEP);
        max_err = max_err.max(rel_error(ad, fd));
    }
    GradCheckReport {
        name: "elbo-parameters".into(),
        cases,
        max_rel_error: max_err,
        tolerance: TOLERANCE_COMPOSED,
    }
}
