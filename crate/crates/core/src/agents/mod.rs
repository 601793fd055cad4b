//! Policy and value networks over the latent state, plus actor-critic
//! training on imagined rollouts.

mod returns;
mod train;

pub use returns::{lambda_return, lambda_return_nodes, v_k_n};
pub use train::{train_actor_critic, ActorCriticConfig, ActorCriticLosses};

use crate::autodiff::{NamedTensors, NodeId, Tape, Tensor};
use crate::error::Result;
use crate::planners::{Policy, StateObjective};
use crate::rng;
use crate::world_model::{Activation, LatentState};

/// Plain feed-forward network. Weight names follow `{name}/w{i}`,
/// `{name}/b{i}` in layer order for checkpoints.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub name: String,
    pub layers: Vec<(Tensor, Tensor)>,
    pub activation: Activation,
    pub tanh_output: bool,
}

impl Mlp {
    pub fn init(
        name: &str,
        sizes: &[usize],
        activation: Activation,
        tanh_output: bool,
        seed: u64,
    ) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        let mut r = rng::stream(&[seed, 0x317, name.len() as u64]);
        let layers = sizes
            .windows(2)
            .map(|w| {
                let bound = 1.0 / (w[0] as f64).sqrt();
                (
                    rng::uniform_tensor(&mut r, &[w[0], w[1]], -bound, bound),
                    rng::uniform_tensor(&mut r, &[w[1]], -bound, bound),
                )
            })
            .collect();
        Self {
            name: name.to_string(),
            layers,
            activation,
            tanh_output,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].0.dims2().0
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().0.dims2().1
    }

    pub fn lift(&self, tape: &mut Tape) -> Vec<(NodeId, NodeId)> {
        self.layers
            .iter()
            .map(|(w, b)| (tape.leaf(w.clone()), tape.leaf(b.clone())))
            .collect()
    }

    pub fn forward_nodes(
        &self,
        tape: &mut Tape,
        nodes: &[(NodeId, NodeId)],
        input: NodeId,
    ) -> Result<NodeId> {
        let mut x = input;
        let last = nodes.len() - 1;
        for (i, (w, b)) in nodes.iter().enumerate() {
            let lin = tape.matmul(x, *w)?;
            x = tape.add(lin, *b)?;
            if i < last {
                x = self.activation.apply(tape, x);
            } else if self.tanh_output {
                x = tape.tanh(x);
            }
        }
        Ok(x)
    }

    /// Forward pass on a scratch tape.
    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let nodes = self.lift(&mut tape);
        let x = tape.leaf(input.clone());
        let y = self.forward_nodes(&mut tape, &nodes, x)?;
        Ok(tape.value(y).clone())
    }

    pub fn named_nodes(&self, nodes: &[(NodeId, NodeId)]) -> Vec<(String, NodeId)> {
        let mut out = Vec::with_capacity(nodes.len() * 2);
        for (i, (w, b)) in nodes.iter().enumerate() {
            out.push((format!("{}/w{i}", self.name), *w));
            out.push((format!("{}/b{i}", self.name), *b));
        }
        out
    }
}

impl NamedTensors for Mlp {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor)) {
        for (i, (w, b)) in self.layers.iter().enumerate() {
            f(&format!("{}/w{i}", self.name), w);
            f(&format!("{}/b{i}", self.name), b);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        for (i, (w, b)) in self.layers.iter_mut().enumerate() {
            f(&format!("{}/w{i}", self.name), w);
            f(&format!("{}/b{i}", self.name), b);
        }
    }
}

/// Action network: latent features (h ++ s) -> tanh-bounded action mean.
#[derive(Clone, Debug)]
pub struct PolicyParams {
    pub net: Mlp,
}

impl PolicyParams {
    pub fn init(
        feature_dim: usize,
        action_dim: usize,
        hidden: usize,
        activation: Activation,
        seed: u64,
    ) -> Self {
        Self {
            net: Mlp::init(
                "policy",
                &[feature_dim, hidden, hidden, action_dim],
                activation,
                true,
                seed,
            ),
        }
    }

    /// Deterministic action for a latent state (rows = batch).
    pub fn act_latent(&self, state: &LatentState) -> Result<Tensor> {
        let feat = concat_rows(&state.h, &state.s);
        self.net.forward(&feat)
    }
}

impl NamedTensors for PolicyParams {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor)) {
        self.net.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.net.visit_mut(f);
    }
}

/// Value network: latent features (h ++ s) -> scalar estimate.
#[derive(Clone, Debug)]
pub struct ValueParams {
    pub net: Mlp,
}

impl ValueParams {
    pub fn init(feature_dim: usize, hidden: usize, activation: Activation, seed: u64) -> Self {
        Self {
            net: Mlp::init(
                "value",
                &[feature_dim, hidden, hidden, 1],
                activation,
                false,
                seed,
            ),
        }
    }

    pub fn value_latent(&self, state: &LatentState) -> Result<Tensor> {
        let feat = concat_rows(&state.h, &state.s);
        self.net.forward(&feat)
    }
}

impl NamedTensors for ValueParams {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor)) {
        self.net.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.net.visit_mut(f);
    }
}

pub(crate) fn concat_rows(a: &Tensor, b: &Tensor) -> Tensor {
    let (rows, ca) = a.dims2();
    let (rb, cb) = b.dims2();
    assert_eq!(rows, rb);
    let mut data = Vec::with_capacity(rows * (ca + cb));
    for r in 0..rows {
        data.extend_from_slice(&a.data()[r * ca..(r + 1) * ca]);
        data.extend_from_slice(&b.data()[r * cb..(r + 1) * cb]);
    }
    Tensor::from_op(vec![rows, ca + cb], data)
}

/// The policy as a planner initializer over RSSM states ([h, s] node
/// layout).
pub struct LatentPolicy<'a> {
    pub policy: &'a PolicyParams,
}

impl Policy for LatentPolicy<'_> {
    fn act(&mut self, state: &[Tensor]) -> Result<Tensor> {
        let feat = concat_rows(&state[0], &state[1]);
        self.net_forward(&feat)
    }
}

impl LatentPolicy<'_> {
    fn net_forward(&self, feat: &Tensor) -> Result<Tensor> {
        self.policy.net.forward(feat)
    }
}

/// The value network as a planning objective over RSSM states.
pub struct LatentValueObjective<'a> {
    pub value: &'a ValueParams,
}

impl StateObjective for LatentValueObjective<'_> {
    fn eval(&self, tape: &mut Tape, state: &[NodeId]) -> Result<NodeId> {
        let feat = tape.concat_cols(&[state[0], state[1]])?;
        let nodes = self.value.net.lift(tape);
        self.value.net.forward_nodes(tape, &nodes, feat)
    }
}
