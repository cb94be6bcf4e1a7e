use std::sync::Arc;

use rand::Rng;

use crate::Scalar;

/// One step of experience. Observations are shared so that consecutive
/// transitions reuse the same stacked tensor.
#[derive(Debug, Clone)]
pub struct Transition<T> {
    pub obs: Arc<[T]>,
    pub action: usize,
    /// Reward after division by the reward scale.
    pub reward: T,
    pub next_obs: Arc<[T]>,
    pub terminal: bool,
}

/// Fixed-capacity ring buffer with uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer<T> {
    capacity: usize,
    items: Vec<Transition<T>>,
    next: usize,
}

impl<T: Scalar> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self { capacity, items: Vec::with_capacity(capacity.min(1 << 16)), next: 0 }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: Transition<T>) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// Uniform sample of buffer indices, with replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<usize> {
        assert!(!self.items.is_empty(), "sampling from an empty replay buffer");
        (0..n).map(|_| rng.gen_range(0..self.items.len())).collect()
    }

    pub fn get(&self, i: usize) -> &Transition<T> {
        &self.items[i]
    }

    pub fn clear(&mut self) {
        self.items = Vec::new();
        self.next = 0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(i: usize) -> Transition<f32> {
        let o: Arc<[f32]> = vec![i as f32].into();
        Transition { obs: o.clone(), action: i % 4, reward: 0.0, next_obs: o, terminal: false }
    }

    #[test]
    fn ring_overwrites_oldest() {
        let mut b = ReplayBuffer::new(3);
        for i in 0..5 {
            b.push(t(i));
        }
        let mut held: Vec<f32> = (0..3).map(|i| b.get(i).obs[0]).collect();
        held.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(held, vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn sampling_is_uniform() {
        let mut b = ReplayBuffer::new(10);
        for i in 0..10 {
            b.push(t(i));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut counts = [0usize; 10];
        for i in b.sample_indices(&mut rng, 100_000) {
            counts[i] += 1;
        }
        // binomial(1e5, 0.1): sigma = sqrt(9000)
        let sigma = (100_000.0f64 * 0.1 * 0.9).sqrt();
        for c in counts {
            assert!((c as f64 - 10_000.0).abs() <= 3.0 * sigma, "{counts:?}");
        }
    }
}
