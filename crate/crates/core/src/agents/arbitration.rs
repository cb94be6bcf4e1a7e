use rand::Rng;
use serde::{Deserialize, Serialize};

use super::AdviceQueue;
use crate::qnet::{argmax, ConfidenceTracker, NetError, QNetwork};
use crate::world::{Action, Cardinal};
use crate::Scalar;

/// Confidence cost `-1 / (ln sqrt(min/max) - 1)`.
///
/// Equals 1 when the best action's loss is as large as the worst loss seen and
/// falls toward 0 as it shrinks. The ratio is clamped to `[1e-12, 1]`; a zero
/// `max_loss` means no training signal yet and costs 1.
pub fn relative_cost(min_loss: f64, max_loss: f64) -> f64 {
    if !(max_loss > 0.0) {
        return 1.0;
    }
    let ratio = (min_loss / max_loss).clamp(1e-12, 1.0);
    -1.0 / (ratio.sqrt().ln() - 1.0)
}

/// Cost from a tracker; untrained trackers cost 1.
pub fn tracker_cost<T: Scalar>(tracker: &ConfidenceTracker<T>) -> f64 {
    match tracker.min_loss() {
        Some(min) => relative_cost(min.to_f64_lossy(), tracker.max_loss().to_f64_lossy()),
        None => 1.0,
    }
}

/// Action that makes progress toward `direction` from `heading`: forward if
/// already facing it, otherwise the turn that faces it.
pub fn cardinal_to_action(heading: Cardinal, direction: Cardinal) -> Action {
    match (direction.index() + 4 - heading.index()) % 4 {
        0 => Action::Forward,
        1 => Action::TurnRight,
        2 => Action::TurnAround,
        _ => Action::TurnLeft,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Baseline,
    Fa,
    Naa,
}

impl AgentKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "baseline" => Some(Self::Baseline),
            "fa" => Some(Self::Fa),
            "naa" => Some(Self::Naa),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Baseline => "baseline",
            Self::Fa => "fa",
            Self::Naa => "naa",
        }
    }

    /// Episode action cap.
    pub fn max_actions(self) -> usize {
        match self {
            Self::Baseline => 1500,
            Self::Fa | Self::Naa => 1000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArbitrationConfig {
    /// Costs at or below this trust the policy.
    pub cost_threshold: f64,
    /// Forward steps NAA keeps following an advice.
    pub friction: u32,
    pub ttl_steps: u64,
    pub capacity: usize,
}

impl Default for ArbitrationConfig {
    fn default() -> Self {
        Self { cost_threshold: 0.25, friction: 2, ttl_steps: 20, capacity: 5 }
    }
}

impl ArbitrationConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.cost_threshold > 0.0 && self.cost_threshold < 1.0) {
            return Err(format!("cost threshold {} must lie in (0, 1)", self.cost_threshold));
        }
        if self.capacity == 0 {
            return Err("advice queue capacity must be positive".into());
        }
        Ok(())
    }

    pub fn queue(&self) -> AdviceQueue {
        AdviceQueue::new(self.capacity, self.ttl_steps)
    }
}

/// Advice an NAA agent is currently reciting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActiveAdvice {
    pub direction: Cardinal,
    pub remaining_forward_steps: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionSource {
    Explore,
    Policy,
    /// A queued advice event was consumed this step.
    Advice,
    /// NAA continued an earlier advice.
    Recital,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Decision {
    pub action: Action,
    pub used_advice: bool,
    pub source: DecisionSource,
}

impl Decision {
    fn new(action: Action, source: DecisionSource) -> Self {
        Self { action, used_advice: source == DecisionSource::Advice, source }
    }
}

fn explore<R: Rng + ?Sized>(epsilon: f64, rng: &mut R) -> Option<Action> {
    if rng.gen::<f64>() < epsilon {
        Some(Action::from_index(rng.gen_range(0..Action::COUNT)))
    } else {
        None
    }
}

fn greedy<T: Scalar>(qnet: &QNetwork<T>, obs: &[T]) -> Result<Action, NetError> {
    Ok(Action::from_index(argmax(&qnet.q_values(obs)?)))
}

/// ε-greedy: uniform random with probability `epsilon`, else the argmax
/// (lowest index on ties). The network is only evaluated when exploiting.
pub fn choose_action_baseline<T: Scalar, R: Rng + ?Sized>(
    qnet: &QNetwork<T>,
    obs: &[T],
    epsilon: f64,
    rng: &mut R,
) -> Result<Action, NetError> {
    match explore(epsilon, rng) {
        Some(a) => Ok(a),
        None => greedy(qnet, obs),
    }
}

/// Feedback Arbitration: explore, else trust the policy when the confidence
/// cost is at most the threshold, else consume the oldest queued advice, else
/// fall back to the policy.
#[allow(clippy::too_many_arguments)]
pub fn fa_choose_action<T: Scalar, R: Rng + ?Sized>(
    qnet: &QNetwork<T>,
    tracker: &ConfidenceTracker<T>,
    queue: &AdviceQueue,
    obs: &[T],
    heading: Cardinal,
    now: u64,
    epsilon: f64,
    rng: &mut R,
    cfg: &ArbitrationConfig,
) -> Result<Decision, NetError> {
    if let Some(a) = explore(epsilon, rng) {
        return Ok(Decision::new(a, DecisionSource::Explore));
    }
    if tracker_cost(tracker) > cfg.cost_threshold {
        if let Some(ev) = queue.pop_fresh(now) {
            return Ok(Decision::new(cardinal_to_action(heading, ev.direction), DecisionSource::Advice));
        }
    }
    Ok(Decision::new(greedy(qnet, obs)?, DecisionSource::Policy))
}

/// Newtonian Action Advice: like FA, but a consumed advice keeps being
/// followed for `friction` forward steps while confidence stays low. Turning
/// to face the advised direction does not use up friction, and a newly queued
/// advice replaces the active one at once.
#[allow(clippy::too_many_arguments)]
pub fn naa_choose_action<T: Scalar, R: Rng + ?Sized>(
    qnet: &QNetwork<T>,
    tracker: &ConfidenceTracker<T>,
    queue: &AdviceQueue,
    active: &mut Option<ActiveAdvice>,
    obs: &[T],
    heading: Cardinal,
    now: u64,
    epsilon: f64,
    rng: &mut R,
    cfg: &ArbitrationConfig,
) -> Result<Decision, NetError> {
    if let Some(a) = explore(epsilon, rng) {
        return Ok(Decision::new(a, DecisionSource::Explore));
    }
    if tracker_cost(tracker) <= cfg.cost_threshold {
        return Ok(Decision::new(greedy(qnet, obs)?, DecisionSource::Policy));
    }
    let source = match queue.pop_fresh(now) {
        Some(ev) => {
            *active = Some(ActiveAdvice { direction: ev.direction, remaining_forward_steps: cfg.friction });
            DecisionSource::Advice
        }
        None if active.is_some() => DecisionSource::Recital,
        None => return Ok(Decision::new(greedy(qnet, obs)?, DecisionSource::Policy)),
    };
    let adv = active.as_mut().expect("active advice set above");
    let action = cardinal_to_action(heading, adv.direction);
    if action == Action::Forward {
        adv.remaining_forward_steps = adv.remaining_forward_steps.saturating_sub(1);
    }
    if adv.remaining_forward_steps == 0 {
        *active = None;
    }
    Ok(Decision::new(action, source))
}

/// Per-episode arbitration state for one agent kind.
#[derive(Debug, Clone)]
pub struct Arbiter {
    pub kind: AgentKind,
    pub cfg: ArbitrationConfig,
    pub active: Option<ActiveAdvice>,
}

impl Arbiter {
    pub fn new(kind: AgentKind, cfg: ArbitrationConfig) -> Self {
        Self { kind, cfg, active: None }
    }

    pub fn reset(&mut self) {
        self.active = None;
    }

    #[allow(clippy::too_many_arguments)]
    pub fn choose<T: Scalar, R: Rng + ?Sized>(
        &mut self,
        qnet: &QNetwork<T>,
        tracker: &ConfidenceTracker<T>,
        queue: &AdviceQueue,
        obs: &[T],
        heading: Cardinal,
        now: u64,
        epsilon: f64,
        rng: &mut R,
    ) -> Result<Decision, NetError> {
        match self.kind {
            AgentKind::Baseline => match explore(epsilon, rng) {
                Some(a) => Ok(Decision::new(a, DecisionSource::Explore)),
                None => Ok(Decision::new(greedy(qnet, obs)?, DecisionSource::Policy)),
            },
            AgentKind::Fa => fa_choose_action(qnet, tracker, queue, obs, heading, now, epsilon, rng, &self.cfg),
            AgentKind::Naa => {
                naa_choose_action(qnet, tracker, queue, &mut self.active, obs, heading, now, epsilon, rng, &self.cfg)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{AdviceEvent, AdviceSource};
    use crate::qnet::NetworkSpec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_net() -> QNetwork<f64> {
        let spec = NetworkSpec { input_channels: 1, input_height: 2, input_width: 2, conv: vec![], dense: vec![], outputs: 4 };
        QNetwork::zeros(spec).unwrap()
    }

    fn low_confidence() -> ConfidenceTracker<f64> {
        let mut t = ConfidenceTracker::new(4);
        t.set(vec![Some(1.0); 4], 1.0);
        t
    }

    fn advice(d: Cardinal) -> AdviceEvent {
        AdviceEvent { direction: d, issued_at: 0, source: AdviceSource::Oracle }
    }

    #[test]
    fn cost_closed_forms() {
        assert_eq!(relative_cost(3.0, 3.0), 1.0);
        assert!((relative_cost((-6.0f64).exp(), 1.0) - 0.25).abs() < 1e-12);
        assert!((relative_cost((-2.0f64).exp(), 1.0) - 0.5).abs() < 1e-12);
        assert_eq!(relative_cost(0.0, 0.0), 1.0);
        assert_eq!(tracker_cost(&ConfidenceTracker::<f32>::new(4)), 1.0);
    }

    #[test]
    fn orientation_table() {
        use Cardinal::*;
        assert_eq!(cardinal_to_action(North, North), Action::Forward);
        assert_eq!(cardinal_to_action(North, South), Action::TurnAround);
        assert_eq!(cardinal_to_action(East, North), Action::TurnLeft);
        assert_eq!(cardinal_to_action(East, South), Action::TurnRight);
        for h in Cardinal::ALL {
            for d in Cardinal::ALL {
                assert_eq!(cardinal_to_action(h, d).apply_to_heading(h), d);
            }
        }
    }

    #[test]
    fn fa_trusts_policy_when_confident() {
        let net = tiny_net();
        let mut t = ConfidenceTracker::new(4);
        t.set(vec![Some(1e-4), Some(1.0), None, None], 1.0);
        let q = AdviceQueue::default();
        q.push(advice(Cardinal::South));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = fa_choose_action(&net, &t, &q, &[0.0; 4], Cardinal::East, 0, 0.0, &mut rng, &Default::default()).unwrap();
        assert_eq!((d.action, d.used_advice), (Action::Forward, false));
        assert_eq!(q.len(), 1);
    }

    #[test]
    fn fa_uses_queued_advice() {
        let net = tiny_net();
        let q = AdviceQueue::default();
        q.push(advice(Cardinal::East));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = ArbitrationConfig::default();
        let d = fa_choose_action(&net, &low_confidence(), &q, &[0.0; 4], Cardinal::East, 0, 0.0, &mut rng, &cfg).unwrap();
        assert_eq!((d.action, d.used_advice), (Action::Forward, true));
        assert!(q.is_empty());
        let d = fa_choose_action(&net, &low_confidence(), &q, &[0.0; 4], Cardinal::East, 0, 0.0, &mut rng, &cfg).unwrap();
        assert_eq!((d.action, d.source), (Action::Forward, DecisionSource::Policy));
    }

    #[test]
    fn naa_recites_with_friction() {
        let net = tiny_net();
        let q = AdviceQueue::default();
        q.push(advice(Cardinal::North));
        let cfg = ArbitrationConfig { friction: 2, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut active = None;
        let mut heading = Cardinal::East;
        let mut seq = Vec::new();
        for step in 0..4 {
            let d = naa_choose_action(&net, &low_confidence(), &q, &mut active, &[0.0; 4], heading, step, 0.0, &mut rng, &cfg)
                .unwrap();
            heading = d.action.apply_to_heading(heading);
            seq.push((d.action, d.source));
        }
        assert_eq!(
            seq,
            vec![
                (Action::TurnLeft, DecisionSource::Advice),
                (Action::Forward, DecisionSource::Recital),
                (Action::Forward, DecisionSource::Recital),
                (Action::Forward, DecisionSource::Policy),
            ]
        );
    }

    #[test]
    fn naa_replaces_active_advice() {
        let net = tiny_net();
        let q = AdviceQueue::default();
        let cfg = ArbitrationConfig { friction: 5, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut active = None;
        q.push(advice(Cardinal::North));
        let d = naa_choose_action(&net, &low_confidence(), &q, &mut active, &[0.0; 4], Cardinal::North, 0, 0.0, &mut rng, &cfg)
            .unwrap();
        assert_eq!(d.action, Action::Forward);
        assert_eq!(active.unwrap().remaining_forward_steps, 4);
        q.push(advice(Cardinal::South));
        let d = naa_choose_action(&net, &low_confidence(), &q, &mut active, &[0.0; 4], Cardinal::North, 1, 0.0, &mut rng, &cfg)
            .unwrap();
        assert_eq!((d.action, d.used_advice), (Action::TurnAround, true));
        assert_eq!(active, Some(ActiveAdvice { direction: Cardinal::South, remaining_forward_steps: 5 }));
    }

    #[test]
    fn naa_defers_to_confident_policy_without_consuming() {
        let net = tiny_net();
        let mut t = ConfidenceTracker::new(4);
        t.set(vec![Some(1e-6); 4], 1.0);
        let q = AdviceQueue::default();
        q.push(advice(Cardinal::West));
        let mut active = Some(ActiveAdvice { direction: Cardinal::West, remaining_forward_steps: 2 });
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let d = naa_choose_action(&net, &t, &q, &mut active, &[0.0; 4], Cardinal::North, 0, 0.0, &mut rng, &Default::default())
            .unwrap();
        assert_eq!(d.source, DecisionSource::Policy);
        assert_eq!(q.len(), 1);
        assert_eq!(active.unwrap().remaining_forward_steps, 2);
    }

    #[test]
    fn exploration_is_uniform() {
        let net = tiny_net();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 10_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            counts[choose_action_baseline(&net, &[0.0; 4], 1.0, &mut rng).unwrap().index()] += 1;
        }
        let e = n as f64 / 4.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
        // 99.9th percentile of chi-squared with 3 degrees of freedom.
        assert!(chi2 < 16.27, "{counts:?}");
    }

    #[test]
    fn zero_network_ties_pick_forward() {
        let net = tiny_net();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        assert_eq!(choose_action_baseline(&net, &[0.3; 4], 0.0, &mut rng).unwrap(), Action::Forward);
    }
}
