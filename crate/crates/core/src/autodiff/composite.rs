//! Composite differentiable operations built from tape primitives.

use crate::autodiff::tape::{NodeId, Tape};
use crate::autodiff::tensor::Tensor;
use crate::error::{GradError, Result};

const LN_2PI: f64 = 1.8378770664093453;

/// Diagonal-Gaussian parameters at the value level. Stddev entries are
/// strictly positive (produced upstream via softplus plus a floor).
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianParams {
    pub mean: Tensor,
    pub stddev: Tensor,
}

impl GaussianParams {
    pub fn new(mean: Tensor, stddev: Tensor) -> Result<Self> {
        if mean.shape() != stddev.shape() {
            return Err(GradError::ShapeMismatch {
                op: "gaussian-params",
                detail: format!("mean {:?} vs stddev {:?}", mean.shape(), stddev.shape()),
            });
        }
        let min = stddev.data().iter().fold(f64::INFINITY, |a, &b| a.min(b));
        if min <= 0.0 {
            return Err(GradError::NonPositiveStddev {
                op: "gaussian-params",
                min,
            });
        }
        Ok(Self { mean, stddev })
    }
}

/// GRU weights on the tape. Gate columns are packed in the fixed order
/// (reset, update, candidate); the checkpoint format relies on this layout.
///
/// `w_x`: [in, 3h], `w_h`: [h, 3h], `b_x`/`b_h`: [3h].
#[derive(Clone, Copy, Debug)]
pub struct GruNodes {
    pub w_x: NodeId,
    pub w_h: NodeId,
    pub b_x: NodeId,
    pub b_h: NodeId,
}

/// One GRU step: x [b, in], h [b, hidden] -> h' [b, hidden].
///
///   r  = sigmoid(x W_xr + b_xr + h W_hr + b_hr)
///   z  = sigmoid(x W_xz + b_xz + h W_hz + b_hz)
///   n  = tanh(x W_xn + b_xn + r * (h W_hn + b_hn))
///   h' = z * h + (1 - z) * n
///
/// With all-zero weights this reduces to h' = 0.5 * h.
pub fn gru_cell(tape: &mut Tape, x: NodeId, h: NodeId, w: &GruNodes) -> Result<NodeId> {
    let hidden = tape.value(h).dims2().1;
    let gx_lin = tape.matmul(x, w.w_x)?;
    let gx = tape.add(gx_lin, w.b_x)?;
    let gh_lin = tape.matmul(h, w.w_h)?;
    let gh = tape.add(gh_lin, w.b_h)?;

    let gx_r = tape.slice_cols(gx, 0, hidden)?;
    let gx_z = tape.slice_cols(gx, hidden, 2 * hidden)?;
    let gx_n = tape.slice_cols(gx, 2 * hidden, 3 * hidden)?;
    let gh_r = tape.slice_cols(gh, 0, hidden)?;
    let gh_z = tape.slice_cols(gh, hidden, 2 * hidden)?;
    let gh_n = tape.slice_cols(gh, 2 * hidden, 3 * hidden)?;

    let r_pre = tape.add(gx_r, gh_r)?;
    let r = tape.sigmoid(r_pre);
    let z_pre = tape.add(gx_z, gh_z)?;
    let z = tape.sigmoid(z_pre);
    let gated = tape.mul(r, gh_n)?;
    let n_pre = tape.add(gx_n, gated)?;
    let n = tape.tanh(n_pre);

    let zh = tape.mul(z, h)?;
    let one_minus_z = {
        let neg = tape.scale(z, -1.0);
        tape.add_scalar(neg, 1.0)
    };
    let zn = tape.mul(one_minus_z, n)?;
    tape.add(zh, zn)
}

fn check_positive_std(tape: &Tape, op: &'static str, std: NodeId) -> Result<()> {
    let min = tape
        .value(std)
        .data()
        .iter()
        .fold(f64::INFINITY, |a, &b| a.min(b));
    if min <= 0.0 {
        return Err(GradError::NonPositiveStddev { op, min });
    }
    Ok(())
}

/// Reparameterized draw: mean + stddev * eps, with eps entering as a
/// constant. d(sample)/d(mean) = 1 and d(sample)/d(stddev) = eps.
pub fn gaussian_sample(tape: &mut Tape, mean: NodeId, std: NodeId, eps: &Tensor) -> Result<NodeId> {
    check_positive_std(tape, "gaussian-sample", std)?;
    if tape.value(mean).shape() != eps.shape() {
        return Err(GradError::ShapeMismatch {
            op: "gaussian-sample",
            detail: format!("mean {:?} vs eps {:?}", tape.value(mean).shape(), eps.shape()),
        });
    }
    let eps_node = tape.leaf(eps.clone());
    let scaled = tape.mul(std, eps_node)?;
    tape.add(mean, scaled)
}

/// Row-wise diagonal-Gaussian log density: sum over columns of
/// -0.5 ln(2 pi) - ln(stddev) - (x - mean)^2 / (2 stddev^2), shape [b, 1].
pub fn gaussian_log_density_rows(
    tape: &mut Tape,
    x: NodeId,
    mean: NodeId,
    std: NodeId,
) -> Result<NodeId> {
    check_positive_std(tape, "gaussian-log-density", std)?;
    let diff = tape.sub(x, mean)?;
    let sq = tape.square(diff);
    let var = tape.square(std);
    let quad = tape.div(sq, var)?;
    let log_std = tape.log(std);
    // per element: -0.5 ln(2 pi) - ln(std) - 0.5 * quad
    let half_quad = tape.scale(quad, 0.5);
    let with_log = tape.add(half_quad, log_std)?;
    let negated = tape.scale(with_log, -1.0);
    let per_elem = tape.add_scalar(negated, -0.5 * LN_2PI);
    Ok(tape.sum_cols(per_elem))
}

/// Diagonal-Gaussian log density summed over every element -> scalar.
pub fn gaussian_log_density(tape: &mut Tape, x: NodeId, mean: NodeId, std: NodeId) -> Result<NodeId> {
    let rows = gaussian_log_density_rows(tape, x, mean, std)?;
    Ok(tape.sum(rows))
}

/// Row-wise KL[ N(q_mean, q_std) || N(p_mean, p_std) ] for diagonal
/// Gaussians, summed over columns: [b, 1]. Differentiable w.r.t. both
/// parameter sets.
pub fn diagonal_gaussian_kl_rows(
    tape: &mut Tape,
    q_mean: NodeId,
    q_std: NodeId,
    p_mean: NodeId,
    p_std: NodeId,
) -> Result<NodeId> {
    check_positive_std(tape, "diagonal-gaussian-kl", q_std)?;
    check_positive_std(tape, "diagonal-gaussian-kl", p_std)?;
    // per element: ln(p_std) - ln(q_std) + (q_std^2 + (q_mean - p_mean)^2) / (2 p_std^2) - 0.5
    let log_p = tape.log(p_std);
    let log_q = tape.log(q_std);
    let log_ratio = tape.sub(log_p, log_q)?;
    let q_var = tape.square(q_std);
    let mean_diff = tape.sub(q_mean, p_mean)?;
    let mean_sq = tape.square(mean_diff);
    let num = tape.add(q_var, mean_sq)?;
    let p_var = tape.square(p_std);
    let ratio = tape.div(num, p_var)?;
    let half_ratio = tape.scale(ratio, 0.5);
    let partial = tape.add(log_ratio, half_ratio)?;
    let per_elem = tape.add_scalar(partial, -0.5);
    Ok(tape.sum_cols(per_elem))
}

/// KL of diagonal Gaussians summed over all dimensions -> scalar.
pub fn diagonal_gaussian_kl(
    tape: &mut Tape,
    q_mean: NodeId,
    q_std: NodeId,
    p_mean: NodeId,
    p_std: NodeId,
) -> Result<NodeId> {
    let rows = diagonal_gaussian_kl_rows(tape, q_mean, q_std, p_mean, p_std)?;
    Ok(tape.sum(rows))
}
