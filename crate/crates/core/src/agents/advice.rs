use std::collections::VecDeque;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};

use serde::{Deserialize, Serialize};

use crate::world::Cardinal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdviceSource {
    Oracle,
    Human,
}

/// One piece of cardinal-direction advice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdviceEvent {
    pub direction: Cardinal,
    /// Global environment step at which the advice was issued.
    pub issued_at: u64,
    pub source: AdviceSource,
}

#[derive(Debug)]
struct Shared {
    events: Mutex<VecDeque<AdviceEvent>>,
    clock: AtomicU64,
    pushed: AtomicU64,
    capacity: usize,
    ttl_steps: u64,
}

/// Bounded FIFO of pending advice shared between a producer (oracle or
/// advice server) and the agent loop. Cloning yields another handle to the
/// same queue.
///
/// The agent loop publishes the global step through [`AdviceQueue::set_clock`];
/// human advice is stamped with it. Events older than `ttl_steps` are purged
/// before every read, and a push into a full queue drops the oldest event.
#[derive(Debug, Clone)]
pub struct AdviceQueue {
    shared: Arc<Shared>,
}

impl Default for AdviceQueue {
    fn default() -> Self {
        Self::new(5, 20)
    }
}

impl AdviceQueue {
    pub fn new(capacity: usize, ttl_steps: u64) -> Self {
        Self {
            shared: Arc::new(Shared {
                events: Mutex::new(VecDeque::with_capacity(capacity.max(1))),
                clock: AtomicU64::new(0),
                pushed: AtomicU64::new(0),
                capacity: capacity.max(1),
                ttl_steps,
            }),
        }
    }

    fn lock(&self) -> MutexGuard<'_, VecDeque<AdviceEvent>> {
        // A panicking producer leaves the deque structurally valid.
        self.shared.events.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn capacity(&self) -> usize {
        self.shared.capacity
    }

    pub fn ttl_steps(&self) -> u64 {
        self.shared.ttl_steps
    }

    pub fn set_clock(&self, step: u64) {
        self.shared.clock.store(step, Ordering::Release);
    }

    pub fn clock(&self) -> u64 {
        self.shared.clock.load(Ordering::Acquire)
    }

    /// Total events ever pushed, including ones later dropped or expired.
    pub fn pushed(&self) -> u64 {
        self.shared.pushed.load(Ordering::Acquire)
    }

    pub fn push(&self, event: AdviceEvent) {
        let mut q = self.lock();
        if q.len() == self.shared.capacity {
            q.pop_front();
        }
        q.push_back(event);
        self.shared.pushed.fetch_add(1, Ordering::AcqRel);
    }

    /// Pushes human advice stamped with the current clock.
    pub fn push_human(&self, direction: Cardinal) {
        self.push(AdviceEvent { direction, issued_at: self.clock(), source: AdviceSource::Human });
    }

    fn purge(&self, q: &mut VecDeque<AdviceEvent>, now: u64) {
        let ttl = self.shared.ttl_steps;
        q.retain(|e| now.saturating_sub(e.issued_at) <= ttl);
    }

    /// Removes and returns the oldest unexpired event.
    pub fn pop_fresh(&self, now: u64) -> Option<AdviceEvent> {
        let mut q = self.lock();
        self.purge(&mut q, now);
        q.pop_front()
    }

    pub fn fresh_len(&self, now: u64) -> usize {
        let mut q = self.lock();
        self.purge(&mut q, now);
        q.len()
    }

    pub fn len(&self) -> usize {
        self.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.lock().is_empty()
    }

    pub fn snapshot(&self) -> Vec<AdviceEvent> {
        self.lock().iter().copied().collect()
    }

    pub fn clear(&self) {
        self.lock().clear();
    }

    /// Empties the queue and returns the push count at that instant, so a
    /// caller can count pushes that arrive afterwards.
    pub fn clear_and_mark(&self) -> u64 {
        let mut q = self.lock();
        q.clear();
        self.pushed()
    }
}
