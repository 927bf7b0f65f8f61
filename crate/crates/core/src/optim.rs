//! AdaBelief optimizer.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::ParamStore;
use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaBeliefConfig {
    pub learning_rate: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub epsilon: f32,
}

impl Default for AdaBeliefConfig {
    fn default() -> Self {
        AdaBeliefConfig {
            learning_rate: 2e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OptimError {
    #[error("parameter {index}: gradient shape {got:?} does not match parameter shape {expected:?}")]
    ShapeMismatch {
        index: usize,
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("expected {expected} gradients, got {got}")]
    CountMismatch { expected: usize, got: usize },
}

/// First moment `m` and belief `s` for every parameter, plus the step count.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaBelief {
    pub config: AdaBeliefConfig,
    pub step: u64,
    pub m: Vec<Matrix>,
    pub s: Vec<Matrix>,
}

impl AdaBelief {
    pub fn new(config: AdaBeliefConfig, params: &ParamStore) -> Self {
        let zeros = |p: &crate::nn::Parameter| Matrix::zeros(p.value.rows(), p.value.cols());
        AdaBelief {
            config,
            step: 0,
            m: params.iter().map(zeros).collect(),
            s: params.iter().map(zeros).collect(),
        }
    }

    /// Applies one update. `grads[i]` is `None` for parameters the loss does
    /// not reach; those are treated as having a zero gradient.
    pub fn update(&mut self, params: &mut ParamStore, grads: &[Option<Matrix>]) -> Result<(), OptimError> {
        if grads.len() != self.m.len() || params.len() != self.m.len() {
            return Err(OptimError::CountMismatch {
                expected: self.m.len(),
                got: grads.len(),
            });
        }
        for (index, (p, g)) in params.iter().zip(grads).enumerate() {
            if let Some(g) = g {
                if g.shape() != p.value.shape() {
                    return Err(OptimError::ShapeMismatch {
                        index,
                        expected: p.value.shape(),
                        got: g.shape(),
                    });
                }
            }
        }
        self.step += 1;
        let AdaBeliefConfig {
            learning_rate: lr,
            beta1: b1,
            beta2: b2,
            epsilon: eps,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - libm::powf(b1, t as f32);
        let c2 = 1.0 - libm::powf(b2, t as f32);
        for (i, p) in params.iter_mut().enumerate() {
            if !p.trainable {
                continue;
            }
            let m = self.m[i].data_mut();
            let s = self.s[i].data_mut();
            let theta = p.value.data_mut();
            for k in 0..theta.len() {
                let g = grads[i].as_ref().map_or(0.0, |g| g.data()[k]);
                m[k] = b1 * m[k] + (1.0 - b1) * g;
                let diff = g - m[k];
                s[k] = b2 * s[k] + (1.0 - b2) * diff * diff + eps;
                let m_hat = m[k] / c1;
                let s_hat = s[k] / c2;
                theta[k] -= lr * m_hat / (libm::sqrtf(s_hat) + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    fn scalar_store(v: f32) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("w".to_string(), Matrix::scalar(v));
        s
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut p = scalar_store(1.5);
        let mut opt = AdaBelief::new(AdaBeliefConfig::default(), &p);
        opt.update(&mut p, &[Some(Matrix::scalar(0.0))]).unwrap();
        assert_eq!(p.iter().next().unwrap().value.data()[0], 1.5);
    }

    #[test]
    fn first_step_bias_correction_recovers_gradient() {
        let mut p = scalar_store(0.0);
        let mut opt = AdaBelief::new(AdaBeliefConfig::default(), &p);
        opt.update(&mut p, &[Some(Matrix::scalar(0.3))]).unwrap();
        let m_hat = opt.m[0].data()[0] / (1.0 - 0.9);
        assert!((m_hat - 0.3).abs() < 1e-6);
    }

    /// Hand-evaluated recurrences in f64 for g = 1, 2, -1.
    #[test]
    fn three_step_trace_matches_hand_computation() {
        let cfg = AdaBeliefConfig {
            learning_rate: 0.1,
            ..AdaBeliefConfig::default()
        };
        let mut p = scalar_store(1.0);
        let mut opt = AdaBelief::new(cfg, &p);
        let (b1, b2, eps, lr) = (0.9f64, 0.999f64, 1e-16f64, 0.1f64);
        let (mut m, mut s, mut th) = (0.0f64, 0.0f64, 1.0f64);
        for (t, g) in [1.0f64, 2.0, -1.0].into_iter().enumerate() {
            let t = (t + 1) as i32;
            m = b1 * m + (1.0 - b1) * g;
            s = b2 * s + (1.0 - b2) * (g - m) * (g - m) + eps;
            th -= lr * (m / (1.0 - b1.powi(t))) / ((s / (1.0 - b2.powi(t))).sqrt() + eps);
            opt.update(&mut p, &[Some(Matrix::scalar(g as f32))]).unwrap();
            let got = p.iter().next().unwrap().value.data()[0] as f64;
            assert!((got - th).abs() < 1e-5, "step {t}: {got} vs {th}");
        }
    }

    #[test]
    fn constant_gradient_moves_against_its_sign() {
        for g in [0.7f32, -0.02] {
            let mut p = scalar_store(0.0);
            let mut opt = AdaBelief::new(AdaBeliefConfig::default(), &p);
            let mut prev = 0.0;
            for _ in 0..200 {
                opt.update(&mut p, &[Some(Matrix::scalar(g))]).unwrap();
                let now = p.iter().next().unwrap().value.data()[0];
                assert_eq!((now - prev).signum(), -g.signum());
                prev = now;
            }
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut p = scalar_store(0.0);
        let mut opt = AdaBelief::new(AdaBeliefConfig::default(), &p);
        let err = opt.update(&mut p, &[Some(Matrix::zeros(2, 1))]).unwrap_err();
        assert!(matches!(err, OptimError::ShapeMismatch { .. }));
        assert_eq!(
            opt.update(&mut p, &[None, None]).unwrap_err(),
            OptimError::CountMismatch { expected: 1, got: 2 }
        );
    }
}
