//! Adam optimizer with bias correction, keyed by parameter path.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::nn::ParamVisit;
use crate::numerics::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First/second moment estimates per parameter path, plus the shared
/// timestep (increments by exactly one per [`AdamState::step`]).
#[derive(Default)]
pub struct AdamState {
    t: u64,
    moments: HashMap<String, (Vec<f64>, Vec<f64>)>,
}

impl AdamState {
    pub fn new() -> Self {
        AdamState::default()
    }

    pub fn timestep(&self) -> u64 {
        self.t
    }

    /// Apply one update to every parameter named in `grads`.
    pub fn step(
        &mut self,
        params: &mut dyn ParamVisit,
        grads: &[(String, Tensor)],
        hp: &AdamHyper,
    ) -> Result<()> {
        self.t += 1;
        let t = self.t as i32;
        let bc1 = 1.0 - hp.beta1.powi(t);
        let bc2 = 1.0 - hp.beta2.powi(t);

        let grad_by_path: HashMap<&str, &Tensor> =
            grads.iter().map(|(p, g)| (p.as_str(), g)).collect();

        let mut shape_err: Option<Error> = None;
        params.visit_mut("", &mut |path, theta| {
            let Some(g) = grad_by_path.get(path) else {
                return; // parameter not part of this step
            };
            if g.shape() != theta.shape() {
                shape_err.get_or_insert(Error::Dimension {
                    op: "adam_step",
                    left: theta.shape().to_vec(),
                    right: g.shape().to_vec(),
                });
                return;
            }
            let (m, v) = self
                .moments
                .entry(path.to_string())
                .or_insert_with(|| (vec![0.0; g.numel()], vec![0.0; g.numel()]));
            let mut data = theta.data().to_vec();
            for (j, &gj) in g.data().iter().enumerate() {
                m[j] = hp.beta1 * m[j] + (1.0 - hp.beta1) * gj;
                v[j] = hp.beta2 * v[j] + (1.0 - hp.beta2) * gj * gj;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                data[j] -= hp.lr * m_hat / (v_hat.sqrt() + hp.eps);
            }
            *theta = Tensor::new(theta.shape().to_vec(), data).expect("same shape");
        });
        match shape_err {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}

/// Scale all gradients so their global L2 norm is at most `max_norm`.
pub fn clip_global_norm(grads: &mut [(String, Tensor)], max_norm: f64) {
    let sq: f64 = grads
        .iter()
        .map(|(_, g)| g.data().iter().map(|v| v * v).sum::<f64>())
        .sum();
    let norm = sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for (_, g) in grads.iter_mut() {
            *g = g.map(|v| v * scale);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{join, ParamVisit};

    struct Single(Tensor);

    impl ParamVisit for Single {
        fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
            f(&join(prefix, "w"), &self.0);
        }
        fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
            f(&join(prefix, "w"), &mut self.0);
        }
    }

    #[test]
    fn first_step_with_unit_gradient_moves_by_lr() {
        let mut p = Single(Tensor::vector(vec![1.0, -2.0, 0.5]));
        let mut state = AdamState::new();
        let grads = vec![("w".to_string(), Tensor::vector(vec![1.0, 1.0, 1.0]))];
        state.step(&mut p, &grads, &AdamHyper::default()).unwrap();
        // bias-corrected first step: m_hat = g, v_hat = g^2, so the update
        // is lr * 1 / (1 + eps) per coordinate
        for (after, before) in p.0.data().iter().zip([1.0, -2.0, 0.5]) {
            assert!((after - (before - 0.001)).abs() < 1e-9, "{after} vs {before}");
        }
        assert_eq!(state.timestep(), 1);
    }

    #[test]
    fn zero_gradient_leaves_params_bit_identical() {
        let init = Tensor::vector(vec![0.25, -1.75]);
        let mut p = Single(init.clone());
        let mut state = AdamState::new();
        let grads = vec![("w".to_string(), Tensor::vector(vec![0.0, 0.0]))];
        state.step(&mut p, &grads, &AdamHyper::default()).unwrap();
        assert_eq!(p.0.bits_key(), init.bits_key());
    }

    #[test]
    fn identical_inputs_stay_identical() {
        let mut a = Single(Tensor::vector(vec![0.3, 0.7]));
        let mut b = Single(Tensor::vector(vec![0.3, 0.7]));
        let mut sa = AdamState::new();
        let mut sb = AdamState::new();
        let grads = vec![("w".to_string(), Tensor::vector(vec![0.11, -0.42]))];
        for _ in 0..5 {
            sa.step(&mut a, &grads, &AdamHyper::default()).unwrap();
            sb.step(&mut b, &grads, &AdamHyper::default()).unwrap();
        }
        assert_eq!(a.0.bits_key(), b.0.bits_key());
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut p = Single(Tensor::vector(vec![1.0, 2.0]));
        let mut state = AdamState::new();
        let grads = vec![("w".to_string(), Tensor::vector(vec![1.0]))];
        assert!(state.step(&mut p, &grads, &AdamHyper::default()).is_err());
    }

    #[test]
    fn clip_rescales_only_above_threshold() {
        let mut grads = vec![("w".to_string(), Tensor::vector(vec![3.0, 4.0]))];
        clip_global_norm(&mut grads, 10.0);
        assert_eq!(grads[0].1.data(), &[3.0, 4.0]);
        clip_global_norm(&mut grads, 1.0);
        let norm: f64 = grads[0].1.data().iter().map(|v| v * v).sum::<f64>();
        assert!((norm.sqrt() - 1.0).abs() < 1e-12);
    }
}
