use serde::{Deserialize, Serialize};

use super::{Gradients, Parameters};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-4, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// First and second moment estimates, aligned with [`Parameters::trainable`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct AdamState<T> {
    pub step: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &Parameters<T>) -> Self {
        let zeros: Vec<Vec<T>> = params.trainable().iter().map(|t| vec![T::zero(); t.len()]).collect();
        Self { step: 0, m: zeros.clone(), v: zeros }
    }

    /// One bias-corrected Adam update.
    pub fn step(&mut self, cfg: &AdamConfig, params: &mut Parameters<T>, grads: &Gradients<T>) {
        self.step += 1;
        let (b1, b2) = (T::of(cfg.beta1), T::of(cfg.beta2));
        let lr = T::of(cfg.learning_rate);
        let eps = T::of(cfg.epsilon);
        let t = self.step as i32;
        let c1 = T::one() - T::of(cfg.beta1.powi(t));
        let c2 = T::one() - T::of(cfg.beta2.powi(t));
        for (k, p) in params.trainable_mut().into_iter().enumerate() {
            let g = &grads.tensors[k];
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (T::one() - b1) * g[i];
                v[i] = b2 * v[i] + (T::one() - b2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

/// Free-function form of [`AdamState::step`].
pub fn adam_step<T: Scalar>(params: &mut Parameters<T>, grads: &Gradients<T>, state: &mut AdamState<T>, cfg: &AdamConfig) {
    state.step(cfg, params, grads);
}
