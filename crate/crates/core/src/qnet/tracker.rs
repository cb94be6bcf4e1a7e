use serde::{Deserialize, Serialize};

use crate::Scalar;

/// Decay of the per-action running loss.
pub const LOSS_EMA_DECAY: f64 = 0.99;

/// Running per-action training loss `L_a` and the largest sample loss seen,
/// `L_max`. Feeds the confidence cost used to arbitrate between policy and
/// advice.
///
/// An action's running loss is unset until a sampled batch contains it; the
/// first sample seeds the average.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ConfidenceTracker<T> {
    per_action: Vec<Option<T>>,
    max_loss: T,
}

impl<T: Scalar> ConfidenceTracker<T> {
    pub fn new(actions: usize) -> Self {
        Self { per_action: vec![None; actions], max_loss: T::zero() }
    }

    /// Folds in one training batch: `(action, sample loss)` pairs.
    pub fn observe_batch(&mut self, samples: &[(usize, T)]) {
        if let Some(m) = samples.iter().map(|s| s.1).reduce(T::max) {
            self.max_loss = self.max_loss.max(m);
        }
        let decay = T::of(LOSS_EMA_DECAY);
        for &(a, loss) in samples {
            let slot = &mut self.per_action[a];
            *slot = Some(match *slot {
                None => loss,
                Some(prev) => decay * prev + (T::one() - decay) * loss,
            });
        }
    }

    pub fn action_loss(&self, action: usize) -> Option<T> {
        self.per_action[action]
    }

    /// Smallest running loss among actions that have been trained on.
    pub fn min_loss(&self) -> Option<T> {
        self.per_action.iter().flatten().copied().reduce(T::min)
    }

    pub fn max_loss(&self) -> T {
        self.max_loss
    }

    /// Overrides the state; for tests and scripted scenarios.
    pub fn set(&mut self, per_action: Vec<Option<T>>, max_loss: T) {
        assert_eq!(per_action.len(), self.per_action.len());
        self.per_action = per_action;
        self.max_loss = max_loss;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn running_average_and_maximum() {
        let mut t = ConfidenceTracker::<f64>::new(4);
        assert_eq!(t.min_loss(), None);
        t.observe_batch(&[(0, 2.0), (1, 0.5)]);
        assert_eq!(t.max_loss(), 2.0);
        assert_eq!(t.action_loss(0), Some(2.0));
        t.observe_batch(&[(0, 1.0)]);
        assert!((t.action_loss(0).unwrap() - (0.99 * 2.0 + 0.01 * 1.0)).abs() < 1e-15);
        assert_eq!(t.min_loss(), Some(0.5));
        assert_eq!(t.action_loss(3), None);
        assert_eq!(t.max_loss(), 2.0);
    }
}
