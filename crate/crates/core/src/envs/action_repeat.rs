//! Action-repeat wrapper: each agent-level step applies the action for
//! `repeat` physics steps, summing rewards; `done` short-circuits.

use crate::autodiff::Tensor;
use crate::envs::{EnvSpec, Environment, StepOutcome};
use crate::error::Result;

pub struct ActionRepeat<E> {
    inner: E,
    repeat: usize,
}

impl<E: Environment> ActionRepeat<E> {
    pub fn new(inner: E, repeat: usize) -> Self {
        assert!(repeat >= 1, "action repeat must be at least 1");
        Self { inner, repeat }
    }

    pub fn inner(&self) -> &E {
        &self.inner
    }
}

/// Boxed constructor for the factory path.
pub fn wrap_action_repeat(
    inner: Box<dyn Environment>,
    repeat: usize,
) -> Box<dyn Environment> {
    assert!(repeat >= 1, "action repeat must be at least 1");
    Box::new(BoxedActionRepeat { inner, repeat })
}

struct BoxedActionRepeat {
    inner: Box<dyn Environment>,
    repeat: usize,
}

fn repeated_step(
    inner: &mut dyn Environment,
    repeat: usize,
    action: &Tensor,
) -> Result<StepOutcome> {
    let mut total_reward = 0.0;
    let mut out = inner.step(action)?;
    total_reward += out.reward;
    for _ in 1..repeat {
        if out.done {
            break;
        }
        out = inner.step(action)?;
        total_reward += out.reward;
    }
    Ok(StepOutcome {
        observation: out.observation,
        reward: total_reward,
        done: out.done,
    })
}

impl<E: Environment> Environment for ActionRepeat<E> {
    fn spec(&self) -> &EnvSpec {
        self.inner.spec()
    }

    fn reset(&mut self, seed: u64) -> Tensor {
        self.inner.reset(seed)
    }

    fn step(&mut self, action: &Tensor) -> Result<StepOutcome> {
        repeated_step(&mut self.inner, self.repeat, action)
    }

    fn state_vec(&self) -> Vec<f64> {
        self.inner.state_vec()
    }
}

impl Environment for BoxedActionRepeat {
    fn spec(&self) -> &EnvSpec {
        self.inner.spec()
    }

    fn reset(&mut self, seed: u64) -> Tensor {
        self.inner.reset(seed)
    }

    fn step(&mut self, action: &Tensor) -> Result<StepOutcome> {
        repeated_step(self.inner.as_mut(), self.repeat, action)
    }

    fn state_vec(&self) -> Vec<f64> {
        self.inner.state_vec()
    }
}
