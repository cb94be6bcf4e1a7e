use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{AdviceQueue, AgentKind, Arbiter, ArbitrationConfig, Decision};
use crate::qnet::{Learner, NetError, NetworkSpec, TrainingConfig};
use crate::world::Cardinal;
use crate::Scalar;

/// A learner plus the arbitration rule of one agent kind. Owns the RNG used
/// for exploration and replay sampling.
#[derive(Debug, Clone)]
pub struct DqnAgent<T> {
    pub learner: Learner<T>,
    pub arbiter: Arbiter,
    /// Environment steps taken across all episodes.
    pub env_steps: u64,
    rng: ChaCha8Rng,
}

impl<T: Scalar> DqnAgent<T> {
    pub fn new(
        kind: AgentKind,
        spec: NetworkSpec,
        training: TrainingConfig,
        arbitration: ArbitrationConfig,
        seed: u64,
    ) -> Result<Self, NetError> {
        arbitration.validate().map_err(NetError::InvalidSpec)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let learner = Learner::new(spec, training, &mut rng)?;
        Ok(Self::from_learner(kind, learner, arbitration, rng.gen()))
    }

    pub fn from_learner(kind: AgentKind, learner: Learner<T>, arbitration: ArbitrationConfig, seed: u64) -> Self {
        Self { learner, arbiter: Arbiter::new(kind, arbitration), env_steps: 0, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn kind(&self) -> AgentKind {
        self.arbiter.kind
    }

    pub fn epsilon(&self) -> f64 {
        self.learner.cfg.exploration.value(self.env_steps)
    }

    /// Clears per-episode arbitration state.
    pub fn begin_episode(&mut self) {
        self.arbiter.reset();
    }

    pub fn act(&mut self, obs: &[T], heading: Cardinal, queue: &AdviceQueue) -> Result<Decision, NetError> {
        let eps = self.epsilon();
        let Self { learner, arbiter, env_steps, rng } = self;
        arbiter.choose(&learner.online, &learner.tracker, queue, obs, heading, *env_steps, eps, rng)
    }

    /// Stores the transition, advances the step counter and trains when due.
    /// Returns the batch loss if a gradient step ran.
    pub fn observe(
        &mut self,
        obs: Arc<[T]>,
        action: usize,
        reward: f64,
        next_obs: Arc<[T]>,
        terminal: bool,
    ) -> Result<Option<T>, NetError> {
        self.learner.remember(obs, action, reward, next_obs, terminal);
        self.env_steps += 1;
        self.learner.maybe_train(self.env_steps, &mut self.rng)
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}
