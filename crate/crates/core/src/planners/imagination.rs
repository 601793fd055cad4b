//! Differentiable imagination rollouts. A planner-visible model exposes a
//! start state, a mean transition, and per-candidate objectives; candidates
//! ride along as tensor rows, so one tape evaluates a whole population and
//! its backward pass yields every candidate's own action gradients.

use crate::autodiff::{NodeId, Tape, Tensor};
use crate::error::Result;
use crate::world_model::{
    deterministic_step, prior_dist, reward_mean, LatentNodes, LatentState, RssmNodes, RssmParams,
};

/// Imagination dynamics as seen by planners. The state is an opaque list of
/// tape nodes whose rows are candidates.
pub trait ImaginationModel {
    fn action_dim(&self) -> usize;

    /// Lift the start state onto the tape, replicated across `candidates` rows.
    fn lift_start(&self, tape: &mut Tape, candidates: usize) -> Result<Vec<NodeId>>;

    /// One mean (noise-free) transition under a [candidates, m] action node.
    fn step(&self, tape: &mut Tape, state: &[NodeId], action: NodeId) -> Result<Vec<NodeId>>;
}

/// Scalar-per-candidate objective evaluated at an imagined state: [J, 1].
pub trait StateObjective {
    fn eval(&self, tape: &mut Tape, state: &[NodeId]) -> Result<NodeId>;
}

/// Action source used to initialize the hybrid planner's trajectory.
/// Operates on state values (one candidate row), not tape nodes; planners
/// differentiate through actions, never through the policy itself.
pub trait Policy {
    fn act(&mut self, state: &[Tensor]) -> Result<Tensor>;
}

/// Roll `plan` (one [J, m] node per step) from the model's start state and
/// accumulate sum_i gamma^i * objective(state_{i+1}), optionally adding
/// gamma^H * terminal(state_H). Returns a [J, 1] node of candidate returns,
/// differentiable w.r.t. the plan nodes.
pub fn imagine_return(
    tape: &mut Tape,
    model: &dyn ImaginationModel,
    objective: &dyn StateObjective,
    plan: &[NodeId],
    candidates: usize,
    gamma: f64,
    terminal: Option<&dyn StateObjective>,
) -> Result<NodeId> {
    let mut state = model.lift_start(tape, candidates)?;
    let mut total: Option<NodeId> = None;
    let mut discount = 1.0;
    for &action in plan {
        state = model.step(tape, &state, action)?;
        let r = objective.eval(tape, &state)?;
        let term = tape.scale(r, discount);
        total = Some(match total {
            Some(acc) => tape.add(acc, term)?,
            None => term,
        });
        discount *= gamma;
    }
    if let Some(v) = terminal {
        let tv = v.eval(tape, &state)?;
        let term = tape.scale(tv, discount);
        total = Some(match total {
            Some(acc) => tape.add(acc, term)?,
            None => term,
        });
    }
    Ok(total.expect("imagine_return needs a non-empty plan or a terminal objective"))
}

/// Trajectory states visited during a rollout (used by the hybrid planner,
/// which needs per-step rewards and values rather than one folded return).
pub fn imagine_trajectory(
    tape: &mut Tape,
    model: &dyn ImaginationModel,
    plan: &[NodeId],
    candidates: usize,
) -> Result<Vec<Vec<NodeId>>> {
    let mut state = model.lift_start(tape, candidates)?;
    let mut states = Vec::with_capacity(plan.len());
    for &action in plan {
        state = model.step(tape, &state, action)?;
        states.push(state.clone());
    }
    Ok(states)
}

/// The learned RSSM as an imagination model: state nodes are [h, s] and
/// transitions take the prior mean. Parameters are lifted onto the tape
/// once per rollout (at `lift_start`) and shared by every step and reward
/// evaluation on that tape.
pub struct RssmImagination<'a> {
    pub params: &'a RssmParams,
    pub start: &'a LatentState,
    lifted: std::cell::RefCell<Option<(usize, RssmNodes)>>,
}

impl<'a> RssmImagination<'a> {
    pub fn new(params: &'a RssmParams, start: &'a LatentState) -> Self {
        Self {
            params,
            start,
            lifted: std::cell::RefCell::new(None),
        }
    }

    /// Parameter nodes for the current tape, lifted on first use after
    /// `lift_start`. Rollouts always begin with `lift_start`, which resets
    /// the cache, so stale ids from a previous tape can never leak.
    fn nodes(&self, tape: &mut Tape) -> RssmNodes {
        let mut slot = self.lifted.borrow_mut();
        if let Some((_, nodes)) = slot.as_ref() {
            return *nodes;
        }
        let start = tape.len();
        let nodes = self.params.lift(tape);
        *slot = Some((start, nodes));
        nodes
    }
}

impl ImaginationModel for RssmImagination<'_> {
    fn action_dim(&self) -> usize {
        self.params.cfg.action_dim
    }

    fn lift_start(&self, tape: &mut Tape, candidates: usize) -> Result<Vec<NodeId>> {
        // fresh rollout: always re-lift parameters for this tape
        *self.lifted.borrow_mut() = None;
        let _ = self.nodes(tape);
        let h = tape.leaf(self.start.h.tile_rows(candidates));
        let s = tape.leaf(self.start.s.tile_rows(candidates));
        Ok(vec![h, s])
    }

    fn step(&self, tape: &mut Tape, state: &[NodeId], action: NodeId) -> Result<Vec<NodeId>> {
        let p = self.nodes(tape);
        let act = self.params.cfg.activation;
        let prev = LatentNodes {
            h: state[0],
            s: state[1],
        };
        let h = deterministic_step(tape, &p, act, &prev, action)?;
        let dist = prior_dist(tape, &p, act, h)?;
        Ok(vec![h, dist.mean])
    }
}

impl StateObjective for RssmImagination<'_> {
    fn eval(&self, tape: &mut Tape, state: &[NodeId]) -> Result<NodeId> {
        let p = self.nodes(tape);
        let latent = LatentNodes {
            h: state[0],
            s: state[1],
        };
        reward_mean(tape, &p, self.params.cfg.activation, &latent)
    }
}

/// The RSSM reward head as a standalone planning objective (lifts its own
/// parameter nodes; prefer passing the [`RssmImagination`] itself as the
/// objective when planning, which shares one lift per tape).
pub struct RssmRewardObjective<'a> {
    pub params: &'a RssmParams,
}

impl StateObjective for RssmRewardObjective<'_> {
    fn eval(&self, tape: &mut Tape, state: &[NodeId]) -> Result<NodeId> {
        let p = self.params.lift(tape);
        let latent = LatentNodes {
            h: state[0],
            s: state[1],
        };
        reward_mean(tape, &p, self.params.cfg.activation, &latent)
    }
}
