//! Candidate-count ablation: evaluate the gradient-refined planner's return
//! distribution as the population size grows. Candidate sampling streams
//! depend only on (seed, candidate index), so candidate sets are nested
//! across population sizes and best-of-J returns are monotone per seed by
//! construction.

use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::error::{GradError, Result};
use crate::harness::compare::lqr_planner_return;
use crate::harness::record::{mean_std, median};

#[derive(Clone, Debug)]
pub struct AblationRow {
    pub candidates: usize,
    pub median: f64,
    pub mean: f64,
    pub std: f64,
    pub returns: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
    /// Medians never decrease as the candidate count grows.
    pub monotone_non_decreasing: bool,
}

impl AblationReport {
    pub fn render(&self) -> String {
        let mut out = String::from("candidates      median        mean         std\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{:>10} {:>11.4} {:>11.4} {:>11.4}\n",
                r.candidates, r.median, r.mean, r.std
            ));
        }
        out.push_str(&format!(
            "median trend non-decreasing: {}\n",
            self.monotone_non_decreasing
        ));
        out
    }
}

/// Evaluate the planner at each candidate count in `j_list` (must be sorted
/// ascending) over the config's seed list.
pub fn ablate_candidates(cfg: &ExperimentConfig, j_list: &[usize]) -> Result<AblationReport> {
    crate::harness::workers::init_workers();
    if j_list.is_empty() {
        return Err(GradError::InvalidConfig("empty candidate list".into()));
    }
    if j_list.windows(2).any(|w| w[0] > w[1]) {
        return Err(GradError::InvalidConfig(
            "candidate list must be sorted ascending".into(),
        ));
    }
    if cfg.env != "lqr" {
        return Err(GradError::InvalidConfig(
            "candidate ablation targets the lqr oracle environment".into(),
        ));
    }
    let rows: Vec<AblationRow> = j_list
        .par_iter()
        .map(|&j| -> Result<AblationRow> {
            let mut sub = cfg.clone();
            sub.candidates = j;
            sub.elite_count = sub.elite_count.min(j);
            let returns: Vec<f64> = sub
                .seeds
                .iter()
                .map(|&s| lqr_planner_return(&sub, s))
                .collect::<Result<_>>()?;
            let (mean, std) = mean_std(&returns);
            Ok(AblationRow {
                candidates: j,
                median: median(&returns),
                mean,
                std,
                returns,
            })
        })
        .collect::<Result<_>>()?;

    let monotone = rows.windows(2).all(|w| w[0].median <= w[1].median);
    Ok(AblationReport {
        rows,
        monotone_non_decreasing: monotone,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::PlannerKind;

    fn cfg() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.env = "lqr".into();
        cfg.planner = PlannerKind::GradMpc;
        cfg.seeds = vec![0, 1, 2];
        cfg.optimisation_iters = 2;
        cfg.action_lr_schedule = vec![0.05];
        cfg
    }

    #[test]
    fn single_entry_list_is_trivially_monotone() {
        let report = ablate_candidates(&cfg(), &[8]).unwrap();
        assert!(report.monotone_non_decreasing);
        assert_eq!(report.rows.len(), 1);
    }

    #[test]
    fn duplicate_counts_give_identical_statistics() {
        let report = ablate_candidates(&cfg(), &[8, 8]).unwrap();
        assert_eq!(report.rows[0].returns, report.rows[1].returns);
        assert_eq!(report.rows[0].median, report.rows[1].median);
    }

    #[test]
    fn unsorted_list_is_rejected() {
        assert!(ablate_candidates(&cfg(), &[16, 8]).is_err());
    }
}
