use serde::{Deserialize, Serialize};

use super::NetError;
use crate::Scalar;

/// Regression loss between predicted and target Q-values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossKind {
    /// Element `(ln(1+s+max(p,-s)) - ln(1+s+max(t,-s)))²`; the batch loss is
    /// the root of the mean.
    SquaredLogError { shift: f64 },
    /// Mean Huber loss.
    Huber { delta: f64 },
}

impl Default for LossKind {
    fn default() -> Self {
        LossKind::SquaredLogError { shift: 1.0 }
    }
}

/// Batch loss, the loss each sample would have as a batch of one, and the
/// gradient with respect to each prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue<T> {
    pub loss: T,
    pub per_sample: Vec<T>,
    pub grad: Vec<T>,
}

impl LossKind {
    fn log_term<T: Scalar>(shift: T, v: T) -> T {
        (T::one() + shift + v.max(-shift)).ln()
    }

    /// Per-sample loss element and its derivative in `pred`.
    pub fn element<T: Scalar>(&self, pred: T, target: T) -> (T, T) {
        match *self {
            LossKind::SquaredLogError { shift } => {
                let s = T::of(shift);
                let d = Self::log_term(s, pred) - Self::log_term(s, target);
                let dp = if pred > -s { T::of(2.0) * d / (T::one() + s + pred) } else { T::zero() };
                (d * d, dp)
            }
            LossKind::Huber { delta } => {
                let delta = T::of(delta);
                let r = pred - target;
                if r.abs() <= delta {
                    (T::of(0.5) * r * r, r)
                } else {
                    (delta * (r.abs() - T::of(0.5) * delta), delta * r.signum())
                }
            }
        }
    }

    pub fn batch<T: Scalar>(&self, preds: &[T], targets: &[T]) -> Result<LossValue<T>, NetError> {
        assert_eq!(preds.len(), targets.len(), "prediction and target counts differ");
        if preds.iter().chain(targets).any(|v| !v.is_finite()) {
            return Err(NetError::NonFinite("loss input"));
        }
        let n = T::of(preds.len() as f64);
        let (elems, de): (Vec<T>, Vec<T>) = preds.iter().zip(targets).map(|(&p, &t)| self.element(p, t)).unzip();
        let mean = elems.iter().copied().sum::<T>() / n;
        let per_sample = match self {
            LossKind::SquaredLogError { .. } => elems.iter().map(|e| e.sqrt()).collect(),
            LossKind::Huber { .. } => elems,
        };
        let (loss, grad) = match self {
            LossKind::SquaredLogError { .. } => {
                let root = mean.sqrt();
                let grad = if root > T::zero() {
                    de.iter().map(|&d| d / (T::of(2.0) * root * n)).collect()
                } else {
                    vec![T::zero(); de.len()]
                };
                (root, grad)
            }
            LossKind::Huber { .. } => (mean, de.iter().map(|&d| d / n).collect()),
        };
        Ok(LossValue { loss, per_sample, grad })
    }
}
