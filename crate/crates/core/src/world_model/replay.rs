use std::collections::VecDeque;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tensor;
use crate::checkpoint;
use crate::error::{GradError, Result};

/// One stored episode: aligned (observation, action, reward) rows, where
/// `actions[t]` was taken after seeing `observations[t]` and produced
/// `rewards[t]`.
#[derive(Clone, Debug)]
pub struct EpisodeRecord {
    observations: Vec<Tensor>,
    actions: Vec<Tensor>,
    rewards: Vec<f64>,
}

impl EpisodeRecord {
    pub fn new(observations: Vec<Tensor>, actions: Vec<Tensor>, rewards: Vec<f64>) -> Result<Self> {
        if observations.len() != actions.len() || actions.len() != rewards.len() {
            return Err(GradError::LengthMismatch {
                context: "episode",
                detail: format!(
                    "obs {} / actions {} / rewards {}",
                    observations.len(),
                    actions.len(),
                    rewards.len()
                ),
            });
        }
        for a in &actions {
            if let Some(i) = a.data().iter().position(|v| v.abs() > 1.0 + 1e-12) {
                return Err(GradError::ActionOutOfBounds {
                    index: i,
                    value: a.data()[i],
                });
            }
        }
        if rewards.iter().any(|r| !r.is_finite()) {
            return Err(GradError::NonFinite { index: 0 });
        }
        Ok(Self {
            observations,
            actions,
            rewards,
        })
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn observations(&self) -> &[Tensor] {
        &self.observations
    }

    pub fn actions(&self) -> &[Tensor] {
        &self.actions
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }

    /// Persist as a manifest+binary pair with tensors
    /// `observations` [T, obs_dim], `actions` [T, m], `rewards` [T, 1].
    pub fn save(&self, stem: &Path) -> Result<()> {
        let t = self.len();
        let obs_dim = self.observations.first().map_or(0, Tensor::len);
        let act_dim = self.actions.first().map_or(0, Tensor::len);
        let mut obs = Vec::with_capacity(t * obs_dim);
        let mut act = Vec::with_capacity(t * act_dim);
        for i in 0..t {
            obs.extend_from_slice(self.observations[i].data());
            act.extend_from_slice(self.actions[i].data());
        }
        checkpoint::save_tensors(
            stem,
            &[
                ("observations".into(), Tensor::from_op(vec![t, obs_dim], obs)),
                ("actions".into(), Tensor::from_op(vec![t, act_dim], act)),
                (
                    "rewards".into(),
                    Tensor::from_op(vec![t, 1], self.rewards.clone()),
                ),
            ],
        )
    }

    pub fn load(stem: &Path) -> Result<Self> {
        let tensors = checkpoint::load_tensors(stem)?;
        let find = |name: &str| {
            tensors
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, t)| t)
                .ok_or_else(|| GradError::Checkpoint {
                    path: stem.display().to_string(),
                    detail: format!("missing tensor `{name}`"),
                })
        };
        let obs = find("observations")?;
        let act = find("actions")?;
        let rew = find("rewards")?;
        let t = obs.dims2().0;
        let rows = |m: &Tensor| (0..t).map(|i| m.row(i)).collect::<Vec<_>>();
        Self::new(rows(obs), rows(act), rew.data().to_vec())
    }
}

/// A batched training chunk: `len()` aligned timesteps, each holding a
/// [batch, dim] tensor per field.
#[derive(Clone, Debug)]
pub struct ChunkBatch {
    pub observations: Vec<Tensor>,
    pub actions: Vec<Tensor>,
    pub rewards: Vec<Tensor>,
}

impl ChunkBatch {
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn batch_size(&self) -> usize {
        self.observations.first().map_or(0, |t| t.dims2().0)
    }
}

/// Bounded FIFO of complete episodes. One writer appends; samplers read a
/// snapshot per call.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    episodes: VecDeque<EpisodeRecord>,
    capacity: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            episodes: VecDeque::new(),
            capacity,
        }
    }

    pub fn push(&mut self, episode: EpisodeRecord) {
        self.episodes.push_back(episode);
        while self.episodes.len() > self.capacity {
            self.episodes.pop_front();
        }
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn episodes(&self) -> impl Iterator<Item = &EpisodeRecord> {
        self.episodes.iter()
    }

    /// Sample `batch` subsequences of length `chunk_len`, gathered into
    /// per-timestep [batch, dim] tensors. Only episodes of at least
    /// `chunk_len` steps are eligible.
    pub fn sample_chunks(
        &self,
        rng: &mut ChaCha8Rng,
        batch: usize,
        chunk_len: usize,
    ) -> Result<ChunkBatch> {
        let eligible: Vec<&EpisodeRecord> = self
            .episodes
            .iter()
            .filter(|e| e.len() >= chunk_len)
            .collect();
        if eligible.is_empty() {
            return Err(GradError::EmptyBuffer);
        }
        let obs_dim = eligible[0].observations[0].len();
        let act_dim = eligible[0].actions[0].len();

        let mut picks = Vec::with_capacity(batch);
        for _ in 0..batch {
            let e = rng.gen_range(0..eligible.len());
            let start = rng.gen_range(0..=eligible[e].len() - chunk_len);
            picks.push((e, start));
        }

        let mut observations = Vec::with_capacity(chunk_len);
        let mut actions = Vec::with_capacity(chunk_len);
        let mut rewards = Vec::with_capacity(chunk_len);
        for t in 0..chunk_len {
            let mut o = Vec::with_capacity(batch * obs_dim);
            let mut a = Vec::with_capacity(batch * act_dim);
            let mut r = Vec::with_capacity(batch);
            for &(e, start) in &picks {
                let ep = eligible[e];
                o.extend_from_slice(ep.observations[start + t].data());
                a.extend_from_slice(ep.actions[start + t].data());
                r.push(ep.rewards[start + t]);
            }
            observations.push(Tensor::from_op(vec![batch, obs_dim], o));
            actions.push(Tensor::from_op(vec![batch, act_dim], a));
            rewards.push(Tensor::from_op(vec![batch, 1], r));
        }
        Ok(ChunkBatch {
            observations,
            actions,
            rewards,
        })
    }
}
