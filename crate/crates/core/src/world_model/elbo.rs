//! Variational training objective: observation/reward reconstruction under
//! unit-variance Gaussian likelihoods plus the posterior-to-prior KL,
//! with the KL clamped from below at `free_nats` so sub-threshold KL
//! carries no gradient.

use crate::autodiff::{diagonal_gaussian_kl_rows, gaussian_log_density_rows, NodeId, Tape, Tensor};
use crate::error::{GradError, Result};
use crate::world_model::replay::ChunkBatch;
use crate::world_model::{
    decode_obs, deterministic_step, encode_obs, posterior_dist, prior_dist, reward_mean,
    sample_state, LatentNodes, RssmNodes, RssmParams,
};

/// Scalar loss components (averaged over batch and transitions).
#[derive(Clone, Copy, Debug)]
pub struct ElboComponents {
    /// recon_obs + recon_reward + clamped KL; the training objective.
    pub total: f64,
    pub recon_obs: f64,
    pub recon_reward: f64,
    /// Raw KL before the free-nats clamp.
    pub kl: f64,
}

/// Tape-side handles to the same components.
#[derive(Clone, Copy, Debug)]
pub struct ElboNodes {
    pub total: NodeId,
    pub recon_obs: NodeId,
    pub recon_reward: NodeId,
    pub kl: NodeId,
}

/// Build the objective on `tape`. `eps` supplies one fixed reparameterization
/// draw of shape [batch, state_size] per transition (chunk length - 1).
pub fn elbo_loss_nodes(
    tape: &mut Tape,
    p: &RssmNodes,
    params: &RssmParams,
    chunk: &ChunkBatch,
    free_nats: f64,
    eps: &[Tensor],
) -> Result<ElboNodes> {
    let t_len = chunk.len();
    if t_len < 2 {
        return Err(GradError::ChunkTooShort {
            need: 2,
            got: t_len,
        });
    }
    if eps.len() != t_len - 1 {
        return Err(GradError::LengthMismatch {
            context: "elbo_loss",
            detail: format!("eps {} vs transitions {}", eps.len(), t_len - 1),
        });
    }
    let act = params.cfg.activation;
    let batch = chunk.batch_size();
    let mut state = LatentNodes {
        h: tape.leaf(Tensor::zeros(&[batch, params.cfg.belief_size])),
        s: tape.leaf(Tensor::zeros(&[batch, params.cfg.state_size])),
    };

    let mut obs_terms = Vec::with_capacity(t_len - 1);
    let mut rew_terms = Vec::with_capacity(t_len - 1);
    let mut kl_terms = Vec::with_capacity(t_len - 1);
    let mut kl_raw_terms = Vec::with_capacity(t_len - 1);

    // transition t-1 -> t: action a_{t-1} leads to o_t and reward r_{t-1}
    for t in 1..t_len {
        let action = tape.leaf(chunk.actions[t - 1].clone());
        let h = deterministic_step(tape, p, act, &state, action)?;
        let prior = prior_dist(tape, p, act, h)?;
        let obs = tape.leaf(chunk.observations[t].clone());
        let embed = encode_obs(tape, p, act, obs)?;
        let posterior = posterior_dist(tape, p, act, h, embed)?;
        let s = sample_state(tape, &posterior, Some(&eps[t - 1]))?;
        state = LatentNodes { h, s };

        // unit-variance Gaussian reconstruction terms
        let obs_pred = decode_obs(tape, p, act, &state)?;
        let unit_obs = tape.leaf(Tensor::full(&[batch, params.cfg.obs_dim], 1.0));
        let obs_ll = gaussian_log_density_rows(tape, obs, obs_pred, unit_obs)?;
        let obs_nll = tape.scale(obs_ll, -1.0);
        obs_terms.push(tape.mean(obs_nll));

        let rew_pred = reward_mean(tape, p, act, &state)?;
        let rew_target = tape.leaf(chunk.rewards[t - 1].clone());
        let unit_rew = tape.leaf(Tensor::full(&[batch, 1], 1.0));
        let rew_ll = gaussian_log_density_rows(tape, rew_target, rew_pred, unit_rew)?;
        let rew_nll = tape.scale(rew_ll, -1.0);
        rew_terms.push(tape.mean(rew_nll));

        let kl = diagonal_gaussian_kl_rows(
            tape,
            posterior.mean,
            posterior.stddev,
            prior.mean,
            prior.stddev,
        )?;
        kl_raw_terms.push(tape.mean(kl));
        let clamped = tape.clamp_min(kl, free_nats);
        kl_terms.push(tape.mean(clamped));
    }

    let avg = |tape: &mut Tape, terms: &[NodeId]| -> Result<NodeId> {
        let mut acc = terms[0];
        for &t in &terms[1..] {
            acc = tape.add(acc, t)?;
        }
        Ok(tape.scale(acc, 1.0 / terms.len() as f64))
    };
    let recon_obs = avg(tape, &obs_terms)?;
    let recon_reward = avg(tape, &rew_terms)?;
    let kl_clamped = avg(tape, &kl_terms)?;
    let kl_raw = avg(tape, &kl_raw_terms)?;
    let partial = tape.add(recon_obs, recon_reward)?;
    let total = tape.add(partial, kl_clamped)?;
    Ok(ElboNodes {
        total,
        recon_obs,
        recon_reward,
        kl: kl_raw,
    })
}

/// Value-level objective on a fresh tape.
pub fn elbo_loss(
    params: &RssmParams,
    chunk: &ChunkBatch,
    free_nats: f64,
    eps: &[Tensor],
) -> Result<ElboComponents> {
    let mut tape = Tape::new();
    let p = params.lift(&mut tape);
    let nodes = elbo_loss_nodes(&mut tape, &p, params, chunk, free_nats, eps)?;
    Ok(ElboComponents {
        total: tape.value(nodes.total).item(),
        recon_obs: tape.value(nodes.recon_obs).item(),
        recon_reward: tape.value(nodes.recon_reward).item(),
        kl: tape.value(nodes.kl).item(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::world_model::{Activation, RssmConfig};

    const LN_2PI: f64 = 1.8378770664093453;

    fn tiny_cfg() -> RssmConfig {
        RssmConfig {
            obs_dim: 3,
            action_dim: 1,
            belief_size: 8,
            state_size: 4,
            hidden_size: 8,
            embedding_size: 6,
            activation: Activation::Relu,
        }
    }

    fn chunk(t_len: usize, batch: usize, cfg: &RssmConfig, seed: u64) -> ChunkBatch {
        let mut r = rng::stream(&[seed]);
        ChunkBatch {
            observations: (0..t_len)
                .map(|_| rng::normal_tensor(&mut r, &[batch, cfg.obs_dim]))
                .collect(),
            actions: (0..t_len)
                .map(|_| rng::uniform_tensor(&mut r, &[batch, cfg.action_dim], -1.0, 1.0))
                .collect(),
            rewards: (0..t_len)
                .map(|_| rng::normal_tensor(&mut r, &[batch, 1]))
                .collect(),
        }
    }

    fn eps_for(t_len: usize, batch: usize, cfg: &RssmConfig, seed: u64) -> Vec<Tensor> {
        let mut r = rng::stream(&[seed, 0xE]);
        (0..t_len - 1)
            .map(|_| rng::normal_tensor(&mut r, &[batch, cfg.state_size]))
            .collect()
    }

    #[test]
    fn rejects_short_chunk() {
        let cfg = tiny_cfg();
        let params = RssmParams::init(cfg.clone(), 1);
        let c = chunk(1, 2, &cfg, 3);
        assert!(matches!(
            elbo_loss(&params, &c, 3.0, &[]),
            Err(GradError::ChunkTooShort { .. })
        ));
    }

    #[test]
    fn perfect_reconstruction_leaves_normalization_constant() {
        // With an exact prediction the Gaussian NLL reduces to the
        // normalization term 0.5 * D * ln(2 pi) per row.
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::matrix(2, 3, vec![0.3; 6]).unwrap());
        let ones = tape.leaf(Tensor::full(&[2, 3], 1.0));
        let ll = gaussian_log_density_rows(&mut tape, x, x, ones).unwrap();
        let nll = tape.scale(ll, -1.0);
        let m = tape.mean(nll);
        let expected = 0.5 * 3.0 * LN_2PI;
        assert!((tape.value(m).item() - expected).abs() < 1e-12);
    }

    #[test]
    fn components_are_finite_and_consistent() {
        let cfg = tiny_cfg();
        let params = RssmParams::init(cfg.clone(), 7);
        let c = chunk(6, 4, &cfg, 5);
        let eps = eps_for(6, 4, &cfg, 5);
        let e = elbo_loss(&params, &c, 3.0, &eps).unwrap();
        for v in [e.total, e.recon_obs, e.recon_reward, e.kl] {
            assert!(v.is_finite());
        }
        assert!(e.kl >= 0.0, "raw KL must be non-negative, got {}", e.kl);
        // clamped KL >= free_nats, so total >= recon terms + free_nats
        assert!(e.total >= e.recon_obs + e.recon_reward + 3.0 - 1e-9);
    }

    #[test]
    fn sub_threshold_kl_gives_zero_posterior_gradient_on_kl_path() {
        // Freshly initialized nets emit near-zero KL (< free_nats), so the
        // KL term must contribute no gradient anywhere.
        let cfg = tiny_cfg();
        let params = RssmParams::init(cfg.clone(), 2);
        let c = chunk(4, 3, &cfg, 9);
        let eps = eps_for(4, 3, &cfg, 9);
        let mut tape = Tape::new();
        let p = params.lift(&mut tape);
        let nodes = elbo_loss_nodes(&mut tape, &p, &params, &c, 3.0, &eps).unwrap();
        assert!(
            tape.value(nodes.kl).item() < 3.0,
            "test premise: raw KL below free nats"
        );
        // Differentiate the clamped-KL part alone: total - recon terms.
        let neg_obs = tape.scale(nodes.recon_obs, -1.0);
        let neg_rew = tape.scale(nodes.recon_reward, -1.0);
        let partial = tape.add(nodes.total, neg_obs).unwrap();
        let kl_only = tape.add(partial, neg_rew).unwrap();
        let grads = tape.backward(kl_only).unwrap();
        for (name, id) in p.named() {
            if let Some(g) = grads.get(id) {
                let max = g.data().iter().fold(0.0f64, |a, &b| a.max(b.abs()));
                assert!(max == 0.0, "param {name} leaks KL gradient {max}");
            }
        }
    }
}
