//! Bootstrapped k-step returns and their exponentially weighted lambda
//! mixture, in both plain-slice and tape-node form.
//!
//! Indexing: `rewards[n]` is the reward earned at step n and `values[n]`
//! the value estimate of the state holding at step n; sequences cover the
//! window [0, horizon].

use crate::autodiff::{NodeId, Tape};
use crate::error::{GradError, Result};

/// k-step bootstrapped return from position `tau`:
///
///   V_k(tau) = sum_{n=tau}^{h-1} gamma^{n-tau} r[n] + gamma^{h-tau} v[h],
///   h = min(tau + k, horizon)
///
/// `rewards` must cover [tau, horizon) and `values` [tau, horizon].
pub fn v_k_n(
    rewards: &[f64],
    values: &[f64],
    tau: usize,
    k: usize,
    gamma: f64,
    horizon: usize,
) -> Result<f64> {
    if k == 0 {
        return Err(GradError::InvalidConfig("k-step return needs k >= 1".into()));
    }
    let h = (tau + k).min(horizon);
    if h > rewards.len() || h >= values.len() {
        return Err(GradError::IndexOutOfRange {
            context: "v_k_n",
            index: h,
            len: values.len(),
        });
    }
    if tau >= horizon {
        return Err(GradError::IndexOutOfRange {
            context: "v_k_n",
            index: tau,
            len: horizon,
        });
    }
    let mut total = 0.0;
    let mut discount = 1.0;
    for n in tau..h {
        total += discount * rewards[n];
        discount *= gamma;
    }
    total += discount * values[h];
    Ok(total)
}

/// Lambda mixture of k-step returns from position `tau`:
///
///   V_lambda(tau) = (1 - lambda) * sum_{n=1}^{H-1} lambda^{n-1} V_n(tau)
///                 + lambda^{H-1} V_H(tau),      H = horizon - tau
///
/// lambda = 1 collapses to the full H-step return; lambda = 0 to the
/// one-step return (0^0 taken as 1).
pub fn lambda_return(
    rewards: &[f64],
    values: &[f64],
    tau: usize,
    lambda: f64,
    gamma: f64,
    horizon: usize,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(GradError::InvalidConfig(format!(
            "lambda {lambda} outside [0, 1]"
        )));
    }
    if tau >= horizon {
        return Err(GradError::IndexOutOfRange {
            context: "lambda_return",
            index: tau,
            len: horizon,
        });
    }
    let h = horizon - tau;
    let mut total = 0.0;
    for n in 1..h {
        total += (1.0 - lambda) * lambda.powi(n as i32 - 1) * v_k_n(rewards, values, tau, n, gamma, horizon)?;
    }
    total += powi0(lambda, h as i32 - 1) * v_k_n(rewards, values, tau, h, gamma, horizon)?;
    Ok(total)
}

/// x^n with the 0^0 = 1 convention.
fn powi0(x: f64, n: i32) -> f64 {
    if n == 0 {
        1.0
    } else {
        x.powi(n)
    }
}

/// Tape-node lambda return at the trajectory start. `rewards[i]` and
/// `values[i]` are [batch, 1] nodes at imagined arrival i (i = 0..H-1);
/// the mixture follows the same formula as [`lambda_return`] with
/// tau = 0 and horizon = H, where arrival i carries reward index i and
/// value index i+1 (the bootstrap at arrival i closes V_{i+1}).
pub fn lambda_return_nodes(
    tape: &mut Tape,
    rewards: &[NodeId],
    values: &[NodeId],
    lambda: f64,
    gamma: f64,
) -> Result<NodeId> {
    let h = rewards.len();
    assert!(h >= 1 && values.len() == h);
    // V_k = sum_{j=0}^{k-1} gamma^j r_j + gamma^k v_{k-1}
    let mut v_k_nodes = Vec::with_capacity(h);
    let mut running: Option<NodeId> = None;
    let mut discount = 1.0;
    for k in 1..=h {
        let term = tape.scale(rewards[k - 1], discount);
        running = Some(match running {
            Some(acc) => tape.add(acc, term)?,
            None => term,
        });
        discount *= gamma;
        let boot = tape.scale(values[k - 1], discount);
        v_k_nodes.push(tape.add(running.unwrap(), boot)?);
    }
    let mut total = tape.scale(v_k_nodes[h - 1], powi0(lambda, h as i32 - 1));
    for n in 1..h {
        let w = (1.0 - lambda) * lambda.powi(n as i32 - 1);
        let term = tape.scale(v_k_nodes[n - 1], w);
        total = tape.add(total, term)?;
    }
    Ok(total)
}
