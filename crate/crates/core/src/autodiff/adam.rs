use std::collections::BTreeMap;

use crate::autodiff::tensor::Tensor;
use crate::error::{GradError, Result};

/// Anything exposing an ordered set of named parameter tensors. The visit
/// order is fixed per type and defines the checkpoint layout.
pub trait NamedTensors {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor));

    fn to_map(&self) -> BTreeMap<String, Tensor> {
        let mut out = BTreeMap::new();
        self.visit(&mut |name, t| {
            out.insert(name.to_string(), t.clone());
        });
        out
    }
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;

/// Per-parameter first/second moment estimates plus the shared step count.
#[derive(Debug, Default, Clone)]
pub struct AdamState {
    slots: BTreeMap<String, (Tensor, Tensor)>,
    step: u64,
}

impl AdamState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One Adam update with bias correction (beta1 = 0.9, beta2 = 0.999).
/// Parameters without a gradient entry are left untouched.
pub fn adam_step(
    params: &mut dyn NamedTensors,
    grads: &BTreeMap<String, Tensor>,
    state: &mut AdamState,
    lr: f64,
    epsilon: f64,
) -> Result<()> {
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - BETA1.powi(t);
    let bc2 = 1.0 - BETA2.powi(t);
    let mut err = None;
    params.visit_mut(&mut |name, p| {
        let Some(g) = grads.get(name) else { return };
        if g.shape() != p.shape() {
            err.get_or_insert(GradError::ShapeMismatch {
                op: "adam-step",
                detail: format!("param {name}: {:?} vs grad {:?}", p.shape(), g.shape()),
            });
            return;
        }
        let (m, v) = state
            .slots
            .entry(name.to_string())
            .or_insert_with(|| (Tensor::zeros(p.shape()), Tensor::zeros(p.shape())));
        let pd = p.data_mut();
        let gd = g.data();
        let md = m.data_mut();
        let vd = v.data_mut();
        for i in 0..pd.len() {
            md[i] = BETA1 * md[i] + (1.0 - BETA1) * gd[i];
            vd[i] = BETA2 * vd[i] + (1.0 - BETA2) * gd[i] * gd[i];
            let m_hat = md[i] / bc1;
            let v_hat = vd[i] / bc2;
            pd[i] -= lr * m_hat / (v_hat.sqrt() + epsilon);
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

/// Scale gradients so their global L2 norm does not exceed `max_norm`.
/// Returns the pre-clip norm.
pub fn clip_grad_norm(grads: &mut BTreeMap<String, Tensor>, max_norm: f64) -> f64 {
    let mut sq = 0.0;
    for g in grads.values() {
        sq += g.data().iter().map(|v| v * v).sum::<f64>();
    }
    let norm = sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        for g in grads.values_mut() {
            for v in g.data_mut() {
                *v *= s;
            }
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    struct OneParam(Tensor);
    impl NamedTensors for OneParam {
        fn visit(&self, f: &mut dyn FnMut(&str, &Tensor)) {
            f("x", &self.0);
        }
        fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
            f("x", &mut self.0);
        }
    }

    #[test]
    fn first_step_is_sign_scaled() {
        let mut p = OneParam(Tensor::vector(vec![1.0, -2.0]).unwrap());
        let mut grads = BTreeMap::new();
        grads.insert("x".into(), Tensor::vector(vec![0.5, -3.0]).unwrap());
        let mut st = AdamState::new();
        adam_step(&mut p, &grads, &mut st, 0.1, 1e-8).unwrap();
        // bias-corrected first step: lr * g / (|g| + eps) ~= lr * sign(g)
        assert!((p.0.data()[0] - (1.0 - 0.1)).abs() < 1e-6);
        assert!((p.0.data()[1] - (-2.0 + 0.1)).abs() < 1e-6);
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut p = OneParam(Tensor::vector(vec![0.7]).unwrap());
        let mut grads = BTreeMap::new();
        grads.insert("x".into(), Tensor::zeros(&[1]));
        let mut st = AdamState::new();
        for _ in 0..5 {
            adam_step(&mut p, &grads, &mut st, 0.1, 1e-4).unwrap();
        }
        assert_eq!(p.0.data(), &[0.7]);
    }

    #[test]
    fn converges_on_quadratic() {
        // minimize f(x) = x^2 from x = 1 with lr 0.1
        let mut p = OneParam(Tensor::scalar(1.0));
        let mut st = AdamState::new();
        for _ in 0..200 {
            let x = p.0.item();
            let mut grads = BTreeMap::new();
            grads.insert("x".into(), Tensor::scalar(2.0 * x));
            adam_step(&mut p, &grads, &mut st, 0.1, 1e-8).unwrap();
        }
        assert!(p.0.item().abs() < 1e-2, "got {}", p.0.item());
    }

    #[test]
    fn clip_rescales_global_norm() {
        let mut grads = BTreeMap::new();
        grads.insert("a".into(), Tensor::vector(vec![3.0]).unwrap());
        grads.insert("b".into(), Tensor::vector(vec![4.0]).unwrap());
        let norm = clip_grad_norm(&mut grads, 1.0);
        assert!((norm - 5.0).abs() < 1e-12);
        assert!((grads["a"].data()[0] - 0.6).abs() < 1e-12);
        assert!((grads["b"].data()[0] - 0.8).abs() < 1e-12);
    }
}
