//! Independent numerical oracles for the verification suites. These
//! deliberately avoid the library's closed-form and recursive
//! implementations: KL via quadrature of the defining integral, lambda
//! returns via literal term enumeration. Compiled only for tests
//! (`test-oracles` feature).

/// KL[ N(mu_q, sd_q) || N(mu_p, sd_p) ] for one dimension by composite
/// Simpson quadrature of the defining integral ∫ q ln(q/p) dx over
/// mu_q ± 12 sd_q.
pub fn quadrature_kl_1d(mu_q: f64, sd_q: f64, mu_p: f64, sd_p: f64) -> f64 {
    let n = 20_000usize; // panels (even)
    let lo = mu_q - 12.0 * sd_q;
    let hi = mu_q + 12.0 * sd_q;
    let h = (hi - lo) / n as f64;
    let ln_norm_q = -(sd_q.ln()) - 0.5 * (2.0 * std::f64::consts::PI).ln();
    let ln_norm_p = -(sd_p.ln()) - 0.5 * (2.0 * std::f64::consts::PI).ln();
    let integrand = |x: f64| {
        let zq = (x - mu_q) / sd_q;
        let zp = (x - mu_p) / sd_p;
        let ln_q = ln_norm_q - 0.5 * zq * zq;
        let ln_p = ln_norm_p - 0.5 * zp * zp;
        ln_q.exp() * (ln_q - ln_p)
    };
    let mut acc = integrand(lo) + integrand(hi);
    for i in 1..n {
        let x = lo + i as f64 * h;
        acc += integrand(x) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0
}

/// Diagonal-Gaussian KL as the sum of per-dimension quadratures.
pub fn quadrature_kl(mu_q: &[f64], sd_q: &[f64], mu_p: &[f64], sd_p: &[f64]) -> f64 {
    mu_q.iter()
        .zip(sd_q)
        .zip(mu_p.iter().zip(sd_p))
        .map(|((&mq, &sq), (&mp, &sp))| quadrature_kl_1d(mq, sq, mp, sp))
        .sum()
}

/// k-step bootstrapped return by a literal summation loop with explicit
/// powers (no incremental discount accumulation).
pub fn k_step_return_enumerated(
    rewards: &[f64],
    values: &[f64],
    tau: usize,
    k: usize,
    gamma: f64,
    horizon: usize,
) -> f64 {
    let h = (tau + k).min(horizon);
    let mut total = 0.0;
    for n in tau..h {
        let e = (n - tau) as i32;
        let w = if e == 0 { 1.0 } else { gamma.powi(e) };
        total += w * rewards[n];
    }
    let e = (h - tau) as i32;
    total + gamma.powi(e) * values[h]
}

/// Lambda return by literal term-by-term enumeration of the mixture
///
///   (1 - lambda) * sum_{n=1}^{H-1} lambda^(n-1) V_n + lambda^(H-1) V_H
///
/// with every weight computed from explicit powers (0^0 taken as 1).
pub fn lambda_return_enumerated(
    rewards: &[f64],
    values: &[f64],
    tau: usize,
    lambda: f64,
    gamma: f64,
    horizon: usize,
) -> f64 {
    let h = horizon - tau;
    let mut total = 0.0;
    for n in 1..h {
        let w = (1.0 - lambda)
            * if n == 1 {
                1.0
            } else {
                lambda.powi(n as i32 - 1)
            };
        total += w * k_step_return_enumerated(rewards, values, tau, n, gamma, horizon);
    }
    let tail_w = if h == 1 { 1.0 } else { lambda.powi(h as i32 - 1) };
    total + tail_w * k_step_return_enumerated(rewards, values, tau, h, gamma, horizon)
}
