//! Planner comparison under a shared environment and budget. On the LQR
//! environment the true linear dynamics serve as the world model, so
//! planner returns are directly comparable to the Riccati optimum.

use rayon::prelude::*;

use crate::autodiff::Tensor;
use crate::config::{ExperimentConfig, PlannerKind};
use crate::envs::true_model::LqrTrueModel;
use crate::envs::{lqr_optimal, Environment, LqrEnv};
use crate::error::{GradError, Result};
use crate::harness::record::mean_std;
use crate::planners::{plan_cem, plan_grad_mpc};
use crate::rng;

#[derive(Clone, Debug)]
pub struct ComparisonRow {
    pub planner: String,
    pub mean: f64,
    pub std: f64,
    pub rank: usize,
    pub returns: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct ComparisonReport {
    pub env: String,
    pub rows: Vec<ComparisonRow>,
    /// Mean Riccati-optimal return over the seeds (LQR only).
    pub optimal_mean: Option<f64>,
}

impl ComparisonReport {
    pub fn render(&self) -> String {
        let mut out = format!("planner comparison on {}\n", self.env);
        out.push_str("rank  planner            mean        std\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{:>4}  {:<16} {:>10.4} {:>10.4}\n",
                row.rank, row.planner, row.mean, row.std
            ));
        }
        if let Some(opt) = self.optimal_mean {
            out.push_str(&format!("optimal (analytic) mean return: {opt:.6}\n"));
        }
        out
    }
}

/// Execute one planner on the LQR environment from a seeded start: plan the
/// full episode against the true dynamics, execute it open loop, return the
/// accumulated reward.
pub fn lqr_planner_return(cfg: &ExperimentConfig, seed: u64) -> Result<f64> {
    let mut env = LqrEnv::new();
    env.set_episode_length(cfg.planning_horizon);
    env.reset(seed);
    let x0: [f64; 2] = env.state_vec().try_into().unwrap();
    let model = LqrTrueModel::new(env.constants().clone(), x0);
    let planner_cfg = cfg.planner_config(seed);
    let plan = match cfg.planner {
        PlannerKind::GradMpc => plan_grad_mpc(&model, &model, &planner_cfg)?,
        PlannerKind::Cem => plan_cem(&model, &model, &planner_cfg)?,
        PlannerKind::Random => {
            // one random candidate, no refinement
            let mut r = rng::stream(&[seed, 0x7A4D]);
            let mut data = rng::normal_tensor(&mut r, &[planner_cfg.horizon, 2])
                .data()
                .to_vec();
            for v in &mut data {
                *v = v.clamp(-1.0, 1.0);
            }
            crate::planners::ActionPlan {
                actions: Tensor::from_op(vec![planner_cfg.horizon, 2], data),
                ret: 0.0,
            }
        }
        other => {
            return Err(GradError::InvalidConfig(format!(
                "planner `{}` not supported in LQR comparison",
                other.name()
            )))
        }
    };
    let mut total = 0.0;
    for h in 0..plan.horizon() {
        let action = plan.actions.row(h);
        let out = env.step(&Tensor::vector(action.data().to_vec()).unwrap())?;
        total += out.reward;
    }
    Ok(total)
}

/// Run each planner config over the shared seed list and rank by mean
/// return (ties share a rank).
pub fn compare_planners(configs: &[ExperimentConfig]) -> Result<ComparisonReport> {
    crate::harness::workers::init_workers();
    if configs.is_empty() {
        return Err(GradError::InvalidConfig("no configs to compare".into()));
    }
    let env = configs[0].env.clone();
    if configs.iter().any(|c| c.env != env) {
        return Err(GradError::InvalidConfig(
            "compared configs must share the environment".into(),
        ));
    }
    if configs.iter().any(|c| c.seeds != configs[0].seeds) {
        return Err(GradError::InvalidConfig(
            "compared configs must share the seed list".into(),
        ));
    }
    if env != "lqr" {
        return Err(GradError::InvalidConfig(
            "planner comparison currently targets the lqr oracle environment".into(),
        ));
    }

    let mut rows: Vec<ComparisonRow> = configs
        .par_iter()
        .map(|cfg| -> Result<ComparisonRow> {
            let returns: Vec<f64> = cfg
                .seeds
                .iter()
                .map(|&s| lqr_planner_return(cfg, s))
                .collect::<Result<_>>()?;
            let (mean, std) = mean_std(&returns);
            Ok(ComparisonRow {
                planner: cfg.planner.name().to_string(),
                mean,
                std,
                rank: 0,
                returns,
            })
        })
        .collect::<Result<_>>()?;

    // rank by mean descending; exact ties share the smaller rank
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&a, &b| rows[b].mean.partial_cmp(&rows[a].mean).unwrap().then(a.cmp(&b)));
    let means: Vec<f64> = order.iter().map(|&i| rows[i].mean).collect();
    for (pos, &i) in order.iter().enumerate() {
        let rank = means
            .iter()
            .position(|&m| m == rows[i].mean)
            .unwrap_or(pos)
            + 1;
        rows[i].rank = rank;
    }

    let optimal_mean = {
        let opts: Vec<f64> = configs[0]
            .seeds
            .iter()
            .map(|&s| {
                let x0 = LqrEnv::sample_x0(s);
                let (cost, _) = lqr_optimal(&crate::envs::LQR, x0, configs[0].planning_horizon);
                -cost
            })
            .collect();
        Some(opts.iter().sum::<f64>() / opts.len() as f64)
    };

    Ok(ComparisonReport {
        env,
        rows: {
            let mut sorted = rows;
            sorted.sort_by_key(|r| r.rank);
            sorted
        },
        optimal_mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lqr_cfg(planner: PlannerKind, seeds: Vec<u64>) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.env = "lqr".into();
        cfg.planner = planner;
        cfg.seeds = seeds;
        cfg.candidates = 100;
        cfg.elite_count = 10;
        cfg
    }

    #[test]
    fn single_config_gets_rank_one() {
        let report = compare_planners(&[lqr_cfg(PlannerKind::Cem, vec![0, 1])]).unwrap();
        assert_eq!(report.rows.len(), 1);
        assert_eq!(report.rows[0].rank, 1);
    }

    #[test]
    fn identical_configs_tie() {
        let a = lqr_cfg(PlannerKind::GradMpc, vec![0, 1]);
        let b = lqr_cfg(PlannerKind::GradMpc, vec![0, 1]);
        let report = compare_planners(&[a, b]).unwrap();
        assert_eq!(report.rows[0].mean, report.rows[1].mean);
        assert_eq!(report.rows[0].rank, report.rows[1].rank);
    }

    #[test]
    fn mismatched_envs_are_rejected() {
        let a = lqr_cfg(PlannerKind::GradMpc, vec![0]);
        let mut b = lqr_cfg(PlannerKind::Cem, vec![0]);
        b.env = "point_reacher".into();
        assert!(compare_planners(&[a, b]).is_err());
    }
}
