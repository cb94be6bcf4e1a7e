use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AdamState, ConfidenceTracker, Learner, NetError, NetworkSpec, Parameters, QNetwork, TrainingConfig};
use crate::Scalar;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Versioned JSON dump of a learner: architecture, parameters, optimizer
/// state and loss tracker. The replay buffer is not saved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Checkpoint<T> {
    pub version: u32,
    pub spec: NetworkSpec,
    pub training: TrainingConfig,
    pub online: Parameters<T>,
    pub target: Option<Parameters<T>>,
    pub adam: AdamState<T>,
    pub tracker: ConfidenceTracker<T>,
    pub train_steps: u64,
    /// Environment steps taken so far; drives the exploration schedule.
    pub env_steps: u64,
    /// Moving-average score at the end of the run that produced this file.
    pub final_moving_average: Option<f64>,
    pub map_digest: Option<String>,
    #[serde(default)]
    pub episodes_trained: usize,
    /// Episode that completed the first run of three goal episodes.
    #[serde(default)]
    pub stable_goal_episode: Option<usize>,
}

impl<T: Scalar> Checkpoint<T> {
    pub fn capture(learner: &Learner<T>, env_steps: u64) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            spec: learner.online.spec().clone(),
            training: learner.cfg.clone(),
            online: learner.online.params().clone(),
            target: learner.target.as_ref().map(|t| t.params().clone()),
            adam: learner.adam.clone(),
            tracker: learner.tracker.clone(),
            train_steps: learner.train_steps,
            env_steps,
            final_moving_average: None,
            map_digest: None,
            episodes_trained: 0,
            stable_goal_episode: None,
        }
    }

    /// Rebuilds the learner with an empty replay buffer.
    pub fn restore(&self) -> Result<Learner<T>, NetError> {
        let online = QNetwork::from_parts(self.spec.clone(), self.online.clone())?;
        let mut learner = Learner::from_network(online, self.training.clone());
        learner.target = match &self.target {
            Some(p) => Some(QNetwork::from_parts(self.spec.clone(), p.clone())?),
            None => None,
        };
        if self.adam.m.len() != self.online.trainable().len() {
            return Err(NetError::Checkpoint("optimizer state does not match parameters".into()));
        }
        learner.adam = self.adam.clone();
        learner.tracker = self.tracker.clone();
        learner.train_steps = self.train_steps;
        Ok(learner)
    }

    pub fn save(&self, path: &Path) -> Result<(), NetError> {
        let text = serde_json::to_string(self).map_err(|e| NetError::Checkpoint(e.to_string()))?;
        fs::write(path, text).map_err(|source| NetError::Io { path: path.display().to_string(), source })
    }

    pub fn load(path: &Path) -> Result<Self, NetError> {
        let text = fs::read_to_string(path).map_err(|source| NetError::Io { path: path.display().to_string(), source })?;
        let ck: Self = serde_json::from_str(&text).map_err(|e| NetError::Checkpoint(format!("{}: {e}", path.display())))?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(NetError::Checkpoint(format!(
                "{}: version {} is not supported (expected {CHECKPOINT_VERSION})",
                path.display(),
                ck.version
            )));
        }
        Ok(ck)
    }
}
