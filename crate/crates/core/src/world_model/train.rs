use std::collections::BTreeMap;

use crate::autodiff::{adam_step, clip_grad_norm, AdamState, Tape, Tensor};
use crate::error::Result;
use crate::rng;
use crate::world_model::{elbo_loss_nodes, ElboComponents, ReplayBuffer, RssmParams};

/// World-model training hyperparameters. Defaults follow the reference
/// configuration; the experiment harness scales them down for desk runs.
#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub chunk_length: usize,
    pub collect_interval: usize,
    pub learning_rate: f64,
    pub adam_epsilon: f64,
    pub grad_clip_norm: f64,
    pub free_nats: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 50,
            chunk_length: 50,
            collect_interval: 100,
            learning_rate: 1e-3,
            adam_epsilon: 1e-4,
            grad_clip_norm: 1000.0,
            free_nats: 3.0,
            seed: 0,
        }
    }
}

/// Runs `cfg.collect_interval` gradient steps on chunks sampled from the
/// buffer. `round` keys the sampling and reparameterization streams so
/// successive rounds draw fresh but reproducible batches. Returns one loss
/// entry per step.
pub fn train_world_model(
    buffer: &ReplayBuffer,
    params: &mut RssmParams,
    adam: &mut AdamState,
    cfg: &TrainConfig,
    round: u64,
) -> Result<Vec<ElboComponents>> {
    let mut trace = Vec::with_capacity(cfg.collect_interval);
    for step in 0..cfg.collect_interval {
        let mut sample_rng = rng::stream(&[cfg.seed, 0x5A17, round, step as u64]);
        let chunk = buffer.sample_chunks(&mut sample_rng, cfg.batch_size, cfg.chunk_length)?;
        let mut eps_rng = rng::stream(&[cfg.seed, 0xE95, round, step as u64]);
        let eps: Vec<Tensor> = (0..chunk.len() - 1)
            .map(|_| {
                rng::normal_tensor(
                    &mut eps_rng,
                    &[chunk.batch_size(), params.cfg.state_size],
                )
            })
            .collect();

        let mut tape = Tape::new();
        let p = params.lift(&mut tape);
        let nodes = elbo_loss_nodes(&mut tape, &p, params, &chunk, cfg.free_nats, &eps)?;
        let components = ElboComponents {
            total: tape.value(nodes.total).item(),
            recon_obs: tape.value(nodes.recon_obs).item(),
            recon_reward: tape.value(nodes.recon_reward).item(),
            kl: tape.value(nodes.kl).item(),
        };
        let grads = tape.backward(nodes.total)?;
        let mut grad_map: BTreeMap<String, Tensor> = BTreeMap::new();
        for (name, id) in p.named() {
            if let Some(g) = grads.get(id) {
                grad_map.insert(name.to_string(), g.clone());
            }
        }
        clip_grad_norm(&mut grad_map, cfg.grad_clip_norm);
        adam_step(params, &grad_map, adam, cfg.learning_rate, cfg.adam_epsilon)?;
        trace.push(components);
    }
    debug_assert!(params.all_finite());
    Ok(trace)
}

/// Owns the optimizer state across training rounds.
pub struct WorldModelTrainer {
    pub params: RssmParams,
    pub adam: AdamState,
    pub cfg: TrainConfig,
    round: u64,
}

impl WorldModelTrainer {
    pub fn new(params: RssmParams, cfg: TrainConfig) -> Self {
        Self {
            params,
            adam: AdamState::new(),
            cfg,
            round: 0,
        }
    }

    pub fn train_round(&mut self, buffer: &ReplayBuffer) -> Result<Vec<ElboComponents>> {
        let round = self.round;
        self.round += 1;
        train_world_model(buffer, &mut self.params, &mut self.adam, &self.cfg, round)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::NamedTensors;
    use crate::world_model::{Activation, EpisodeRecord, RssmConfig};

    fn tiny_setup() -> (ReplayBuffer, RssmParams) {
        let cfg = RssmConfig {
            obs_dim: 2,
            action_dim: 1,
            belief_size: 8,
            state_size: 4,
            hidden_size: 8,
            embedding_size: 6,
            activation: Activation::Relu,
        };
        let params = RssmParams::init(cfg, 1);
        let mut buf = ReplayBuffer::new(16);
        let mut r = rng::stream(&[44]);
        for _ in 0..3 {
            let len = 12;
            let ep = EpisodeRecord::new(
                (0..len).map(|_| rng::normal_tensor(&mut r, &[2])).collect(),
                (0..len)
                    .map(|_| rng::uniform_tensor(&mut r, &[1], -1.0, 1.0))
                    .collect(),
                (0..len).map(|i| (i as f64 * 0.37).sin()).collect(),
            )
            .unwrap();
            buf.push(ep);
        }
        (buf, params)
    }

    #[test]
    fn zero_steps_leave_params_unchanged() {
        let (buf, mut params) = tiny_setup();
        let before = params.to_map();
        let mut adam = AdamState::new();
        let cfg = TrainConfig {
            collect_interval: 0,
            batch_size: 2,
            chunk_length: 6,
            ..TrainConfig::default()
        };
        let trace = train_world_model(&buf, &mut params, &mut adam, &cfg, 0).unwrap();
        assert!(trace.is_empty());
        assert_eq!(params.to_map(), before);
    }

    #[test]
    fn trace_has_one_entry_per_step() {
        let (buf, mut params) = tiny_setup();
        let mut adam = AdamState::new();
        let cfg = TrainConfig {
            collect_interval: 7,
            batch_size: 2,
            chunk_length: 6,
            ..TrainConfig::default()
        };
        let trace = train_world_model(&buf, &mut params, &mut adam, &cfg, 0).unwrap();
        assert_eq!(trace.len(), 7);
        assert!(params.all_finite());
    }

    #[test]
    fn empty_buffer_is_an_error() {
        let (_, mut params) = tiny_setup();
        let buf = ReplayBuffer::new(4);
        let mut adam = AdamState::new();
        let cfg = TrainConfig {
            collect_interval: 1,
            batch_size: 2,
            chunk_length: 6,
            ..TrainConfig::default()
        };
        assert!(train_world_model(&buf, &mut params, &mut adam, &cfg, 0).is_err());
    }
}
