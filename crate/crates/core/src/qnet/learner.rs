use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    argmax, AdamConfig, AdamState, ConfidenceTracker, LossKind, Mode, NetError, NetworkSpec, QNetwork, ReplayBuffer,
    Transition,
};
use crate::Scalar;

/// Linear ε decay from `start` to `end` over `decay_steps` environment steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_steps: u64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self { start: 1.0, end: 0.05, decay_steps: 20_000 }
    }
}

impl EpsilonSchedule {
    pub fn constant(eps: f64) -> Self {
        Self { start: eps, end: eps, decay_steps: 0 }
    }

    pub fn value(&self, step: u64) -> f64 {
        if self.decay_steps == 0 || step >= self.decay_steps {
            return self.end;
        }
        let frac = step as f64 / self.decay_steps as f64;
        self.start + (self.end - self.start) * frac
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub adam: AdamConfig,
    pub gamma: f64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    pub min_replay: usize,
    /// Environment steps between gradient updates.
    pub train_every: u64,
    /// Gradient updates between target-network syncs; `None` bootstraps from
    /// the online network.
    pub target_sync: Option<u64>,
    pub exploration: EpsilonSchedule,
    /// Rewards are divided by this before they enter the replay buffer.
    pub reward_scale: f64,
    pub loss: LossKind,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            adam: AdamConfig::default(),
            gamma: 0.95,
            batch_size: 32,
            replay_capacity: 20_000,
            min_replay: 500,
            train_every: 1,
            target_sync: Some(500),
            exploration: EpsilonSchedule::default(),
            reward_scale: 1000.0,
            loss: LossKind::default(),
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<(), NetError> {
        let bad = |m: &str| Err(NetError::InvalidSpec(m.to_string()));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if self.adam.learning_rate <= 0.0 {
            return bad("learning rate must be positive");
        }
        if self.exploration.end > self.exploration.start {
            return bad("epsilon end must not exceed epsilon start");
        }
        if self.batch_size == 0 || self.reward_scale <= 0.0 || self.train_every == 0 {
            return bad("batch size, reward scale and train_every must be positive");
        }
        Ok(())
    }
}

/// One-step bootstrapped target `r + γ·max Q(s',·)·(1 − terminal)`.
pub fn bellman_target<T: Scalar>(reward: T, gamma: T, next_q: &[T], terminal: bool) -> T {
    if terminal {
        return reward;
    }
    let best = next_q.iter().copied().fold(T::neg_infinity(), T::max);
    reward + gamma * best
}

/// Tabular Q-learning update `Q + α(r + γ·max Q' − Q)`.
pub fn q_learning_update<T: Scalar>(q: T, alpha: T, reward: T, gamma: T, max_next: T) -> T {
    q + alpha * (reward + gamma * max_next - q)
}

/// Online network, target network, optimizer state, replay and loss tracker.
#[derive(Debug, Clone)]
pub struct Learner<T> {
    pub cfg: TrainingConfig,
    pub online: QNetwork<T>,
    pub target: Option<QNetwork<T>>,
    pub adam: AdamState<T>,
    pub tracker: ConfidenceTracker<T>,
    pub replay: ReplayBuffer<T>,
    pub train_steps: u64,
}

impl<T: Scalar> Learner<T> {
    pub fn new<R: Rng + ?Sized>(spec: NetworkSpec, cfg: TrainingConfig, rng: &mut R) -> Result<Self, NetError> {
        spec.validate_for_actions()?;
        cfg.validate()?;
        let online = QNetwork::new(spec, rng)?;
        Ok(Self::from_network(online, cfg))
    }

    pub fn from_network(online: QNetwork<T>, cfg: TrainingConfig) -> Self {
        let target = cfg.target_sync.map(|_| online.clone());
        let adam = AdamState::new(online.params());
        let tracker = ConfidenceTracker::new(online.spec().outputs);
        let replay = ReplayBuffer::new(cfg.replay_capacity);
        Self { cfg, online, target, adam, tracker, replay, train_steps: 0 }
    }

    pub fn q_values(&self, obs: &[T]) -> Result<Vec<T>, NetError> {
        self.online.q_values(obs)
    }

    pub fn greedy_action(&self, obs: &[T]) -> Result<usize, NetError> {
        Ok(argmax(&self.q_values(obs)?))
    }

    /// Stores a transition; the raw reward is divided by the reward scale.
    pub fn remember(&mut self, obs: std::sync::Arc<[T]>, action: usize, raw_reward: f64, next_obs: std::sync::Arc<[T]>, terminal: bool) {
        let reward = T::of(raw_reward / self.cfg.reward_scale);
        self.replay.push(Transition { obs, action, reward, next_obs, terminal });
    }

    /// Trains if the schedule calls for it at environment step `env_step`.
    pub fn maybe_train<R: Rng + ?Sized>(&mut self, env_step: u64, rng: &mut R) -> Result<Option<T>, NetError> {
        if self.replay.len() < self.cfg.min_replay.max(1) || env_step % self.cfg.train_every != 0 {
            return Ok(None);
        }
        self.train_step(rng).map(Some)
    }

    /// One gradient update on a uniformly sampled batch. Returns the batch loss.
    pub fn train_step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<T, NetError> {
        let loss = train_step(
            &self.replay,
            &mut self.online,
            self.target.as_ref(),
            &mut self.adam,
            &self.cfg,
            &mut self.tracker,
            rng,
        )?;
        self.train_steps += 1;
        if let (Some(period), Some(target)) = (self.cfg.target_sync, self.target.as_mut()) {
            if period > 0 && self.train_steps % period == 0 {
                *target = self.online.clone();
            }
        }
        Ok(loss)
    }

    pub fn sync_target(&mut self) {
        if let Some(t) = self.target.as_mut() {
            *t = self.online.clone();
        }
    }
}

/// Samples a batch, regresses the taken-action outputs onto Bellman targets,
/// applies Adam and updates the confidence tracker.
pub fn train_step<T: Scalar, R: Rng + ?Sized>(
    buffer: &ReplayBuffer<T>,
    online: &mut QNetwork<T>,
    target: Option<&QNetwork<T>>,
    adam: &mut AdamState<T>,
    cfg: &TrainingConfig,
    tracker: &mut ConfidenceTracker<T>,
    rng: &mut R,
) -> Result<T, NetError> {
    let need = cfg.min_replay.max(1);
    if buffer.len() < need {
        return Err(NetError::InsufficientReplay { have: buffer.len(), need });
    }
    let idx = buffer.sample_indices(rng, cfg.batch_size);
    let b = idx.len();
    let in_len = online.spec().input_len();
    let outputs = online.spec().outputs;
    let mut obs = Vec::with_capacity(b * in_len);
    let mut next = Vec::with_capacity(b * in_len);
    for &i in &idx {
        let t = buffer.get(i);
        obs.extend_from_slice(&t.obs);
        next.extend_from_slice(&t.next_obs);
    }
    let gamma = T::of(cfg.gamma);
    let bootstrap = target.unwrap_or(online);
    let next_q = if gamma > T::zero() {
        bootstrap.forward(&next, b, Mode::Infer)?.output().to_vec()
    } else {
        vec![T::zero(); b * outputs]
    };
    let targets: Vec<T> = idx
        .iter()
        .enumerate()
        .map(|(k, &i)| {
            let t = buffer.get(i);
            bellman_target(t.reward, gamma, &next_q[k * outputs..(k + 1) * outputs], t.terminal)
        })
        .collect();

    let pass = online.forward(&obs, b, Mode::Train)?;
    let out = pass.output();
    let preds: Vec<T> = idx.iter().enumerate().map(|(k, &i)| out[k * outputs + buffer.get(i).action]).collect();
    let lv = cfg.loss.batch(&preds, &targets)?;
    let mut grad_out = vec![T::zero(); b * outputs];
    for (k, &i) in idx.iter().enumerate() {
        grad_out[k * outputs + buffer.get(i).action] = lv.grad[k];
    }
    let grads = online.backward(&pass, &grad_out);
    online.commit_batch_stats(&pass);
    adam.step(&cfg.adam, online.params_mut(), &grads);
    if !online.params().all_finite() {
        return Err(NetError::NonFinite("parameters after update"));
    }
    let samples: Vec<(usize, T)> = idx.iter().zip(&lv.per_sample).map(|(&i, &l)| (buffer.get(i).action, l)).collect();
    tracker.observe_batch(&samples);
    Ok(lv.loss)
}
