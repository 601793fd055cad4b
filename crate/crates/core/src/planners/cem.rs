//! Cross-entropy planning: sample action sequences from a diagonal
//! Gaussian, refit its mean and variance to the top-k elites, repeat, and
//! execute the final mean. Gradient-free; returns are evaluated forward
//! only.

use crate::autodiff::{NodeId, Tape, Tensor};
use crate::error::Result;
use crate::planners::imagination::{imagine_return, ImaginationModel, StateObjective};
use crate::planners::{clip_unit, ActionPlan, PlannerConfig};
use crate::rng;

const SAMPLE_TAG: u64 = 0xCE;
/// Variance floor keeping the refit distribution non-degenerate.
pub const VARIANCE_FLOOR: f64 = 1e-6;

fn evaluate_population(
    model: &dyn ImaginationModel,
    objective: &dyn StateObjective,
    plans: &[Vec<f64>],
    cfg: &PlannerConfig,
) -> Result<Vec<f64>> {
    let m = model.action_dim();
    let j = plans.len();
    let mut tape = Tape::new();
    let steps: Vec<NodeId> = (0..cfg.horizon)
        .map(|h| {
            let mut data = Vec::with_capacity(j * m);
            for plan in plans {
                data.extend_from_slice(&plan[h * m..(h + 1) * m]);
            }
            tape.leaf(Tensor::from_op(vec![j, m], data))
        })
        .collect();
    let returns = imagine_return(&mut tape, model, objective, &steps, j, cfg.discount, None)?;
    Ok(tape.value(returns).data().to_vec())
}

/// Cross-entropy planning. The per-candidate sampling streams are keyed by
/// (seed, candidate, iteration), so results are population-order and
/// schedule independent.
pub fn plan_cem(
    model: &dyn ImaginationModel,
    objective: &dyn StateObjective,
    cfg: &PlannerConfig,
) -> Result<ActionPlan> {
    cfg.validate()?;
    let m = model.action_dim();
    let dims = cfg.horizon * m;
    let mut mu = vec![0.0; dims];
    let mut var: Vec<f64> = vec![1.0; dims];

    for it in 0..cfg.iterations {
        let plans: Vec<Vec<f64>> = (0..cfg.candidates)
            .map(|j| {
                let mut r = rng::stream(&[cfg.seed, SAMPLE_TAG, j as u64, it as u64]);
                let eps = rng::normal_tensor(&mut r, &[dims]);
                let mut plan: Vec<f64> = mu
                    .iter()
                    .zip(&var)
                    .zip(eps.data())
                    .map(|((&mu_d, &var_d), &e)| mu_d + var_d.sqrt() * e)
                    .collect();
                clip_unit(&mut plan);
                plan
            })
            .collect();
        let returns = evaluate_population(model, objective, &plans, cfg)?;

        // top-k by return, ties toward lower candidate index
        let mut order: Vec<usize> = (0..plans.len()).collect();
        order.sort_by(|&a, &b| returns[b].partial_cmp(&returns[a]).unwrap().then(a.cmp(&b)));
        let elites = &order[..cfg.elite_count];

        for d in 0..dims {
            let mean = elites.iter().map(|&e| plans[e][d]).sum::<f64>() / elites.len() as f64;
            let spread = elites
                .iter()
                .map(|&e| (plans[e][d] - mean).powi(2))
                .sum::<f64>()
                / elites.len() as f64;
            mu[d] = mean;
            var[d] = spread.max(VARIANCE_FLOOR);
        }
    }

    clip_unit(&mut mu);
    let ret = evaluate_population(model, objective, &[mu.clone()], cfg)?[0];
    Ok(ActionPlan {
        actions: Tensor::from_op(vec![cfg.horizon, m], mu),
        ret,
    })
}
