//! Flat key-value experiment configuration files.
//!
//! One `key value` pair per line, `#` comments. Hyperparameter keys follow
//! the reference table names exactly (`belief-size`, `free-nats`,
//! `grad-clip-norm`, `planning-horizon`, `optimisation-iters`,
//! `candidates`, `action-learning-rate`, ...); the learning-rate schedule
//! is dash-separated, e.g. `0.1-0.01-0.005-0.0001`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{GradError, Result};
use crate::planners::PlannerConfig;
use crate::world_model::{Activation, RssmConfig, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlannerKind {
    GradMpc,
    Cem,
    Policy,
    PolicyGradMpc,
    Random,
}

impl PlannerKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "grad-mpc" => Ok(Self::GradMpc),
            "cem" => Ok(Self::Cem),
            "policy" => Ok(Self::Policy),
            "policy-grad-mpc" => Ok(Self::PolicyGradMpc),
            "random" => Ok(Self::Random),
            other => Err(GradError::InvalidConfig(format!(
                "unknown planner `{other}` (grad-mpc | cem | policy | policy-grad-mpc | random)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::GradMpc => "grad-mpc",
            Self::Cem => "cem",
            Self::Policy => "policy",
            Self::PolicyGradMpc => "policy-grad-mpc",
            Self::Random => "random",
        }
    }
}

/// Split a dash-separated schedule, keeping exponents like `1e-3` intact.
pub fn parse_lr_schedule(s: &str) -> Result<Vec<f64>> {
    let mut parts = Vec::new();
    let mut current = String::new();
    let mut prev: Option<char> = None;
    for ch in s.chars() {
        if ch == '-' && !current.is_empty() && !matches!(prev, Some('e') | Some('E')) {
            parts.push(current.clone());
            current.clear();
            prev = None;
            continue;
        }
        current.push(ch);
        prev = Some(ch);
    }
    if !current.is_empty() {
        parts.push(current);
    }
    parts
        .iter()
        .map(|p| {
            let v = p.parse::<f64>().map_err(|_| {
                GradError::InvalidConfig(format!("bad learning-rate entry `{p}` in `{s}`"))
            })?;
            if v <= 0.0 {
                return Err(GradError::InvalidConfig(format!(
                    "learning-rate entry `{p}` in `{s}` must be positive"
                )));
            }
            Ok(v)
        })
        .collect()
}

/// Everything a training or evaluation run needs.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub env: String,
    pub planner: PlannerKind,
    pub seeds: Vec<u64>,

    // budget
    pub total_steps: usize,
    pub seed_episodes: usize,
    pub eval_episodes: usize,
    pub eval_every: usize,
    pub max_episode_length: usize,
    pub action_repeat: Option<usize>,

    // world model
    pub belief_size: usize,
    pub state_size: usize,
    pub hidden_size: usize,
    pub embedding_size: usize,
    pub activation: Activation,
    pub experience_size: usize,
    pub batch_size: usize,
    pub chunk_length: usize,
    pub collect_interval: usize,
    pub learning_rate: f64,
    pub adam_epsilon: f64,
    pub grad_clip_norm: f64,
    pub free_nats: f64,

    // planning
    pub planning_horizon: usize,
    pub optimisation_iters: usize,
    pub candidates: usize,
    pub action_lr_schedule: Vec<f64>,
    pub discount: f64,
    pub elite_count: usize,
    pub lambda: f64,
    pub exploration_noise: f64,

    /// Write zeros in the CSV wall-clock column so reruns are byte-identical;
    /// set false to record measured seconds.
    pub deterministic_timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            env: "point_reacher".into(),
            planner: PlannerKind::GradMpc,
            seeds: vec![0],
            total_steps: 50_000,
            seed_episodes: 5,
            eval_episodes: 1,
            eval_every: 1,
            max_episode_length: 1000,
            action_repeat: None,
            belief_size: 64,
            state_size: 16,
            hidden_size: 64,
            embedding_size: 64,
            activation: Activation::Relu,
            experience_size: 10_000,
            batch_size: 16,
            chunk_length: 50,
            collect_interval: 100,
            learning_rate: 1e-3,
            adam_epsilon: 1e-4,
            grad_clip_norm: 1000.0,
            free_nats: 3.0,
            planning_horizon: 12,
            optimisation_iters: 40,
            candidates: 1000,
            action_lr_schedule: vec![0.1, 0.01, 0.005, 0.0001],
            discount: 1.0,
            elite_count: 100,
            lambda: 0.95,
            exploration_noise: 0.3,
            deterministic_timing: true,
        }
    }
}

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<u64>()
                .map_err(|_| GradError::InvalidConfig(format!("bad seed `{p}`")))
        })
        .collect()
}

impl ExperimentConfig {
    pub fn planner_config(&self, seed: u64) -> PlannerConfig {
        PlannerConfig {
            horizon: self.planning_horizon,
            iterations: self.optimisation_iters,
            candidates: self.candidates,
            action_lr_schedule: self.action_lr_schedule.clone(),
            discount: self.discount,
            elite_count: self.elite_count.min(self.candidates),
            lambda: self.lambda,
            seed,
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            chunk_length: self.chunk_length,
            collect_interval: self.collect_interval,
            learning_rate: self.learning_rate,
            adam_epsilon: self.adam_epsilon,
            grad_clip_norm: self.grad_clip_norm,
            free_nats: self.free_nats,
            seed,
        }
    }

    pub fn rssm_config(&self, obs_dim: usize, action_dim: usize) -> RssmConfig {
        RssmConfig {
            obs_dim,
            action_dim,
            belief_size: self.belief_size,
            state_size: self.state_size,
            hidden_size: self.hidden_size,
            embedding_size: self.embedding_size,
            activation: self.activation,
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| GradError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::from_str_cfg(&text)
    }

    pub fn from_str_cfg(text: &str) -> Result<Self> {
        let mut kv = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut it = line.splitn(2, char::is_whitespace);
            let key = it.next().unwrap().to_string();
            let value = it
                .next()
                .map(str::trim)
                .filter(|v| !v.is_empty())
                .ok_or_else(|| {
                    GradError::InvalidConfig(format!("line {}: key `{key}` has no value", lineno + 1))
                })?;
            kv.insert(key, value.to_string());
        }
        Self::from_kv(&kv)
    }

    pub fn from_kv(kv: &BTreeMap<String, String>) -> Result<Self> {
        let mut cfg = Self::default();
        for (key, value) in kv {
            cfg.apply(key, value)?;
        }
        Ok(cfg)
    }

    /// Apply one key-value override.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse::<T>()
                .map_err(|_| GradError::InvalidConfig(format!("bad value `{v}` for `{key}`")))
        }
        match key {
            "env" => self.env = value.to_string(),
            "planner" => self.planner = PlannerKind::parse(value)?,
            "seeds" => self.seeds = parse_seeds(value)?,
            "total-steps" => self.total_steps = num(key, value)?,
            "seed-episodes" => self.seed_episodes = num(key, value)?,
            "eval-episodes" => self.eval_episodes = num(key, value)?,
            "eval-every" => self.eval_every = num(key, value)?,
            "max-episode-length" => self.max_episode_length = num(key, value)?,
            "action-repeat" => self.action_repeat = Some(num(key, value)?),
            "belief-size" => self.belief_size = num(key, value)?,
            "state-size" => self.state_size = num(key, value)?,
            "hidden-size" => self.hidden_size = num(key, value)?,
            "embedding-size" => self.embedding_size = num(key, value)?,
            "activation-function" => self.activation = Activation::parse(value)?,
            "experience-size" => self.experience_size = num(key, value)?,
            "batch-size" => self.batch_size = num(key, value)?,
            "chunk-length" => self.chunk_length = num(key, value)?,
            "collect-interval" => self.collect_interval = num(key, value)?,
            "learning-rate" => self.learning_rate = num(key, value)?,
            "adam-epsilon" => self.adam_epsilon = num(key, value)?,
            "grad-clip-norm" => self.grad_clip_norm = num(key, value)?,
            "free-nats" => self.free_nats = num(key, value)?,
            "planning-horizon" => self.planning_horizon = num(key, value)?,
            "optimisation-iters" => self.optimisation_iters = num(key, value)?,
            "candidates" => self.candidates = num(key, value)?,
            "action-learning-rate" => self.action_lr_schedule = parse_lr_schedule(value)?,
            "discount" => self.discount = num(key, value)?,
            "elite-count" => self.elite_count = num(key, value)?,
            "lambda" => self.lambda = num(key, value)?,
            "exploration-noise" => self.exploration_noise = num(key, value)?,
            "deterministic-timing" => {
                self.deterministic_timing = match value {
                    "true" => true,
                    "false" => false,
                    _ => {
                        return Err(GradError::InvalidConfig(format!(
                            "bad value `{value}` for `deterministic-timing`"
                        )))
                    }
                }
            }
            other => {
                return Err(GradError::InvalidConfig(format!("unknown config key `{other}`")))
            }
        }
        Ok(())
    }

    /// Serialize back to the flat key-value format.
    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        let schedule = self
            .action_lr_schedule
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join("-");
        let seeds = self
            .seeds
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(",");
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} {v}");
        };
        put("env", self.env.clone());
        put("planner", self.planner.name().into());
        put("seeds", seeds);
        put("total-steps", self.total_steps.to_string());
        put("seed-episodes", self.seed_episodes.to_string());
        put("eval-episodes", self.eval_episodes.to_string());
        put("eval-every", self.eval_every.to_string());
        put("max-episode-length", self.max_episode_length.to_string());
        if let Some(ar) = self.action_repeat {
            put("action-repeat", ar.to_string());
        }
        put("belief-size", self.belief_size.to_string());
        put("state-size", self.state_size.to_string());
        put("hidden-size", self.hidden_size.to_string());
        put("embedding-size", self.embedding_size.to_string());
        put("activation-function", self.activation.name().into());
        put("experience-size", self.experience_size.to_string());
        put("batch-size", self.batch_size.to_string());
        put("chunk-length", self.chunk_length.to_string());
        put("collect-interval", self.collect_interval.to_string());
        put("learning-rate", self.learning_rate.to_string());
        put("adam-epsilon", self.adam_epsilon.to_string());
        put("grad-clip-norm", self.grad_clip_norm.to_string());
        put("free-nats", self.free_nats.to_string());
        put("planning-horizon", self.planning_horizon.to_string());
        put("optimisation-iters", self.optimisation_iters.to_string());
        put("candidates", self.candidates.to_string());
        put("action-learning-rate", schedule);
        put("discount", self.discount.to_string());
        put("elite-count", self.elite_count.to_string());
        put("lambda", self.lambda.to_string());
        put("exploration-noise", self.exploration_noise.to_string());
        put(
            "deterministic-timing",
            self.deterministic_timing.to_string(),
        );
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_parsing_handles_plain_and_exponent_forms() {
        assert_eq!(
            parse_lr_schedule("0.1-0.01-0.005-0.0001").unwrap(),
            vec![0.1, 0.01, 0.005, 0.0001]
        );
        assert_eq!(parse_lr_schedule("1e-3-1e-4").unwrap(), vec![1e-3, 1e-4]);
        assert_eq!(parse_lr_schedule("0.05").unwrap(), vec![0.05]);
        assert!(parse_lr_schedule("0.1--0.2").is_err());
    }

    #[test]
    fn reference_table_keys_are_accepted() {
        let text = "\
# reference defaults
max-episode-length 1000
experience-size 1000000
activation-function relu
embedding-size 1024
hidden-size 200
belief-size 200
state-size 30
exploration-noise 0.3
seed-episodes 5
collect-interval 100
batch-size 50
free-nats 3
learning-rate 1e-3
adam-epsilon 1e-4
grad-clip-norm 1000
planning-horizon 12
optimisation-iters 40
candidates 1000
action-learning-rate 0.1-0.01-0.005-0.0001
";
        let cfg = ExperimentConfig::from_str_cfg(text).unwrap();
        assert_eq!(cfg.belief_size, 200);
        assert_eq!(cfg.state_size, 30);
        assert_eq!(cfg.embedding_size, 1024);
        assert_eq!(cfg.planning_horizon, 12);
        assert_eq!(cfg.optimisation_iters, 40);
        assert_eq!(cfg.candidates, 1000);
        assert_eq!(cfg.free_nats, 3.0);
        assert_eq!(cfg.grad_clip_norm, 1000.0);
        assert_eq!(cfg.adam_epsilon, 1e-4);
        assert_eq!(cfg.action_lr_schedule, vec![0.1, 0.01, 0.005, 0.0001]);
        assert_eq!(cfg.experience_size, 1_000_000);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_str_cfg("belief-sizes 12\n").is_err());
    }

    #[test]
    fn round_trip_through_text() {
        let mut cfg = ExperimentConfig::default();
        cfg.seeds = vec![3, 5, 8];
        cfg.planner = PlannerKind::Cem;
        cfg.action_lr_schedule = vec![0.1, 0.0001];
        let text = cfg.to_config_string();
        let back = ExperimentConfig::from_str_cfg(&text).unwrap();
        assert_eq!(back.seeds, cfg.seeds);
        assert_eq!(back.planner, cfg.planner);
        assert_eq!(back.action_lr_schedule, cfg.action_lr_schedule);
        assert_eq!(back.env, cfg.env);
    }
}
