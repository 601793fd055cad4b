//! The training loop: seed episodes with random actions, then alternate
//! world-model training rounds with planner-in-the-loop collection and
//! periodic noise-free evaluation. Seeds run as independent parallel jobs;
//! all randomness is keyed by counter-based streams, so reruns and worker
//! counts never change the record.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use crate::agents::{
    train_actor_critic, ActorCriticConfig, LatentPolicy, LatentValueObjective, PolicyParams,
    ValueParams,
};
use crate::autodiff::Tensor;
use crate::checkpoint;
use crate::config::{ExperimentConfig, PlannerKind};
use crate::envs::{make_env_configured, Environment};
use crate::error::{GradError, Result};
use crate::harness::record::{mean_std, RunRecord, RunRecordRow};
use crate::planners::{
    add_exploration_noise, plan_cem, plan_grad_mpc, plan_policy_grad_mpc, RssmImagination,
};
use crate::rng;
use crate::world_model::{
    posterior_start_states, posterior_step, EpisodeRecord, LatentState, ReplayBuffer, RssmParams,
    WorldModelTrainer,
};

/// Artifacts of one full run.
pub struct TrainOutcome {
    pub record: RunRecord,
    /// Mean random-policy return over the seed episodes, per seed.
    pub random_baselines: Vec<(u64, f64)>,
    /// Final evaluation mean return, per seed.
    pub final_eval: Vec<(u64, f64)>,
}

struct SeedOutcome {
    rows: Vec<RunRecordRow>,
    baseline: f64,
    final_eval: f64,
    model: RssmParams,
    episodes: Vec<EpisodeRecord>,
}

struct Agent {
    trainer: WorldModelTrainer,
    policy: Option<PolicyParams>,
    value: Option<ValueParams>,
}

fn mix(parts: &[u64]) -> u64 {
    let mut acc = 0x51ED2347u64;
    for &p in parts {
        acc = (acc ^ p.wrapping_mul(0x9E3779B97F4A7C15))
            .rotate_left(17)
            .wrapping_mul(0xBF58476D1CE4E5B9);
    }
    acc
}

fn uniform_action(dim: usize, parts: &[u64]) -> Tensor {
    rng::uniform_tensor(&mut rng::stream(parts), &[dim], -1.0, 1.0)
}

/// Roll one episode with the configured planner, filtering the belief
/// forward with each executed action. `explore` adds exploration noise to
/// the executed action only.
fn collect_episode(
    env: &mut dyn Environment,
    agent: &Agent,
    cfg: &ExperimentConfig,
    seed: u64,
    episode_tag: u64,
    explore: bool,
) -> Result<(EpisodeRecord, f64)> {
    let params = &agent.trainer.params;
    let action_dim = env.spec().action_dim;
    let mut obs = env.reset(mix(&[seed, 0xEB, episode_tag]));
    let mut state = LatentState::zero(&params.cfg, 1);
    let mut prev_action = Tensor::zeros(&[1, action_dim]);
    let mut noise_rng = rng::stream(&[seed, 0x4015E, episode_tag]);

    let mut observations = Vec::new();
    let mut actions = Vec::new();
    let mut rewards = Vec::new();
    let mut step_idx = 0u64;
    loop {
        let obs_row = Tensor::from_op(vec![1, obs.len()], obs.data().to_vec());
        state = posterior_step(&state, &prev_action, &obs_row, params, None)?.state;

        let mut planner_cfg = cfg.planner_config(mix(&[seed, episode_tag, step_idx]));
        let action = match cfg.planner {
            PlannerKind::Random => {
                uniform_action(action_dim, &[seed, 0xA7, episode_tag, step_idx])
            }
            PlannerKind::GradMpc => {
                let model = RssmImagination::new(params, &state);
                plan_grad_mpc(&model, &model, &planner_cfg)?.first_action()
            }
            PlannerKind::Cem => {
                let model = RssmImagination::new(params, &state);
                plan_cem(&model, &model, &planner_cfg)?.first_action()
            }
            PlannerKind::Policy => {
                let policy = agent.policy.as_ref().expect("policy planner without policy");
                policy.act_latent(&state)?.row(0)
            }
            PlannerKind::PolicyGradMpc => {
                let policy = agent.policy.as_ref().expect("hybrid planner without policy");
                let value = agent.value.as_ref().expect("hybrid planner without value");
                planner_cfg.candidates = 1;
                let model = RssmImagination::new(params, &state);
                let value_obj = LatentValueObjective { value };
                let mut init = LatentPolicy { policy };
                plan_policy_grad_mpc(&model, &model, &value_obj, &mut init, &planner_cfg)?
                    .first_action()
            }
        };
        let executed = if explore {
            add_exploration_noise(&action, cfg.exploration_noise, &mut noise_rng)
        } else {
            action
        };

        let out = env.step(&executed)?;
        observations.push(obs);
        actions.push(executed.clone());
        rewards.push(out.reward);
        obs = out.observation;
        prev_action = Tensor::from_op(vec![1, executed.len()], executed.data().to_vec());
        step_idx += 1;
        if out.done {
            break;
        }
    }
    let total: f64 = rewards.iter().sum();
    Ok((EpisodeRecord::new(observations, actions, rewards)?, total))
}

fn collect_random_episode(
    env: &mut dyn Environment,
    seed: u64,
    episode_tag: u64,
) -> Result<(EpisodeRecord, f64)> {
    let action_dim = env.spec().action_dim;
    let mut obs = env.reset(mix(&[seed, 0xEB, episode_tag]));
    let mut observations = Vec::new();
    let mut actions = Vec::new();
    let mut rewards = Vec::new();
    let mut t = 0u64;
    loop {
        let a = uniform_action(action_dim, &[seed, 0xA7, episode_tag, t]);
        let out = env.step(&a)?;
        observations.push(obs);
        actions.push(a);
        rewards.push(out.reward);
        obs = out.observation;
        t += 1;
        if out.done {
            break;
        }
    }
    let total: f64 = rewards.iter().sum();
    Ok((EpisodeRecord::new(observations, actions, rewards)?, total))
}

fn evaluate(
    env: &mut dyn Environment,
    agent: &Agent,
    cfg: &ExperimentConfig,
    seed: u64,
    round: u64,
) -> Result<(f64, f64)> {
    let mut returns = Vec::with_capacity(cfg.eval_episodes);
    for e in 0..cfg.eval_episodes {
        let tag = 0xE0000 + round * 1000 + e as u64;
        let (_, ret) = collect_episode(env, agent, cfg, seed, tag, false)?;
        returns.push(ret);
    }
    Ok(mean_std(&returns))
}

fn train_agent_round(
    agent: &mut Agent,
    buffer: &ReplayBuffer,
    cfg: &ExperimentConfig,
    seed: u64,
    round: u64,
) -> Result<()> {
    let starts = posterior_start_states(buffer, &agent.trainer.params, 64, &[seed, 0x57A, round])?;
    let ac = ActorCriticConfig {
        imagination_horizon: 15,
        gamma: 0.99,
        lambda: cfg.lambda,
        learning_rate: cfg.learning_rate,
        adam_epsilon: cfg.adam_epsilon,
        grad_clip_norm: cfg.grad_clip_norm,
        batch_size: cfg.batch_size.min(16),
        updates: cfg.collect_interval,
        seed: mix(&[seed, 0xAC, round]),
    };
    train_actor_critic(
        &agent.trainer.params,
        agent.policy.as_mut().unwrap(),
        agent.value.as_mut().unwrap(),
        &starts,
        &ac,
    )?;
    Ok(())
}

fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedOutcome> {
    let started = Instant::now();
    let mut env = make_env_configured(&cfg.env, cfg.max_episode_length, cfg.action_repeat)?;
    let spec = env.spec().clone();
    let feature_dim = cfg.belief_size + cfg.state_size;
    let wants_agent = matches!(
        cfg.planner,
        PlannerKind::Policy | PlannerKind::PolicyGradMpc
    );
    let mut agent = Agent {
        trainer: WorldModelTrainer::new(
            RssmParams::init(
                cfg.rssm_config(spec.obs_dim, spec.action_dim),
                mix(&[seed, 0x1111]),
            ),
            cfg.train_config(mix(&[seed, 0x7124])),
        ),
        policy: wants_agent.then(|| {
            PolicyParams::init(
                feature_dim,
                spec.action_dim,
                cfg.hidden_size,
                cfg.activation,
                mix(&[seed, 0xF0]),
            )
        }),
        value: wants_agent
            .then(|| ValueParams::init(feature_dim, cfg.hidden_size, cfg.activation, mix(&[seed, 0x7A1]))),
    };

    let mut buffer = ReplayBuffer::new(cfg.experience_size);
    let mut rows = Vec::new();
    let mut env_steps = 0usize;
    let mut seed_returns = Vec::new();

    for e in 0..cfg.seed_episodes {
        let (record, ret) = collect_random_episode(env.as_mut(), seed, e as u64)?;
        env_steps += cfg.max_episode_length;
        seed_returns.push(ret);
        buffer.push(record);
    }
    let baseline = seed_returns.iter().sum::<f64>() / seed_returns.len().max(1) as f64;

    let mut episodes: Vec<EpisodeRecord> = buffer.episodes().cloned().collect();
    let mut last_eval = (baseline, 0.0);
    let mut episode_idx = cfg.seed_episodes;
    let mut round = 0u64;
    while env_steps + cfg.max_episode_length <= cfg.total_steps {
        agent.trainer.train_round(&buffer)?;
        if agent.policy.is_some() {
            train_agent_round(&mut agent, &buffer, cfg, seed, round)?;
        }
        let (record, _) = collect_episode(env.as_mut(), &agent, cfg, seed, 0x200 + round, true)?;
        env_steps += cfg.max_episode_length;
        buffer.push(record.clone());
        episodes.push(record);

        if (episode_idx - cfg.seed_episodes + 1) % cfg.eval_every == 0 {
            last_eval = evaluate(env.as_mut(), &agent, cfg, seed, round)?;
        }
        rows.push(RunRecordRow {
            seed,
            episode: episode_idx,
            steps: env_steps,
            return_mean: last_eval.0,
            return_std: last_eval.1,
            seconds: if cfg.deterministic_timing {
                0.0
            } else {
                started.elapsed().as_secs_f64()
            },
        });
        episode_idx += 1;
        round += 1;
    }

    let final_eval = evaluate(env.as_mut(), &agent, cfg, seed, 0xF1A1)?;
    rows.push(RunRecordRow {
        seed,
        episode: episode_idx,
        steps: env_steps,
        return_mean: final_eval.0,
        return_std: final_eval.1,
        seconds: if cfg.deterministic_timing {
            0.0
        } else {
            started.elapsed().as_secs_f64()
        },
    });

    Ok(SeedOutcome {
        rows,
        baseline,
        final_eval: final_eval.0,
        model: agent.trainer.params.clone(),
        episodes,
    })
}

/// Run the full experiment across all configured seeds (in parallel) and
/// optionally persist checkpoints, episodes, the config, and the CSV.
pub fn run_training(cfg: &ExperimentConfig, out_dir: Option<&Path>) -> Result<TrainOutcome> {
    crate::harness::workers::init_workers();
    if cfg.seeds.is_empty() {
        return Err(GradError::InvalidConfig("seeds must be non-empty".into()));
    }
    if cfg.total_steps < cfg.seed_episodes * cfg.max_episode_length {
        return Err(GradError::InvalidConfig(format!(
            "total-steps {} below seed-episodes {} x max-episode-length {}",
            cfg.total_steps, cfg.seed_episodes, cfg.max_episode_length
        )));
    }
    let outcomes: Vec<Result<SeedOutcome>> = cfg
        .seeds
        .par_iter()
        .map(|&seed| run_seed(cfg, seed))
        .collect();

    let mut record = RunRecord::default();
    let mut baselines = Vec::new();
    let mut finals = Vec::new();
    for (seed, outcome) in cfg.seeds.iter().zip(outcomes) {
        let o = outcome.map_err(|e| {
            GradError::InvalidConfig(format!("run for seed {seed} failed: {e}"))
        })?;
        record.rows.extend(o.rows.clone());
        baselines.push((*seed, o.baseline));
        finals.push((*seed, o.final_eval));
        if let Some(dir) = out_dir {
            let seed_dir = dir.join(format!("seed_{seed}"));
            std::fs::create_dir_all(seed_dir.join("episodes")).map_err(|e| GradError::Io {
                path: seed_dir.display().to_string(),
                source: e,
            })?;
            checkpoint::save_params(&seed_dir.join("model"), &o.model)?;
            for (i, ep) in o.episodes.iter().enumerate() {
                ep.save(&seed_dir.join("episodes").join(format!("ep_{i:05}")))?;
            }
        }
    }
    if let Some(dir) = out_dir {
        record.write_csv(&dir.join("record.csv"))?;
        std::fs::write(dir.join("config.txt"), cfg.to_config_string()).map_err(|e| {
            GradError::Io {
                path: dir.join("config.txt").display().to_string(),
                source: e,
            }
        })?;
    }
    Ok(TrainOutcome {
        record,
        random_baselines: baselines,
        final_eval: finals,
    })
}

/// Evaluate a stored checkpoint (no training).
pub fn evaluate_checkpoint(
    cfg: &ExperimentConfig,
    model_stem: &Path,
) -> Result<Vec<(u64, f64, f64)>> {
    let mut out = Vec::new();
    for &seed in &cfg.seeds {
        let mut env = make_env_configured(&cfg.env, cfg.max_episode_length, cfg.action_repeat)?;
        let spec = env.spec().clone();
        let mut params = RssmParams::init(cfg.rssm_config(spec.obs_dim, spec.action_dim), 0);
        checkpoint::load_params(model_stem, &mut params)?;
        let agent = Agent {
            trainer: WorldModelTrainer::new(params, cfg.train_config(seed)),
            policy: None,
            value: None,
        };
        let (mean, std) = evaluate(env.as_mut(), &agent, cfg, seed, 0xE7A1)?;
        out.push((seed, mean, std));
    }
    Ok(out)
}
