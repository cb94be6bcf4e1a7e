use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::metrics::{reconvergence_episode, reconvergence_threshold, EpisodeRecord};
use super::runner::{build_agent, RunHooks, Session};
use super::{load_map, ExperimentConfig, HarnessError};
use crate::qnet::Checkpoint;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub rotations: u32,
    /// Trailing 10-episode average score at the end of phase one.
    pub phase1_final_moving_average: f64,
    pub phase1_stable_goal_episode: Option<usize>,
    pub threshold: f64,
    /// One-based; `None` if the agent did not recover within the budget.
    pub reconvergence_episode: Option<usize>,
    pub records: Vec<EpisodeRecord>,
}

/// Continues training a converged agent on the map rotated by `rotations`
/// quarter turns and measures how long it takes to recover its score.
pub fn transfer_experiment(
    cfg: &ExperimentConfig,
    checkpoint: &Path,
    rotations: u32,
    hooks: &RunHooks,
) -> Result<TransferReport, HarnessError> {
    cfg.validate()?;
    if !checkpoint.exists() {
        return Err(HarnessError::MissingCheckpoint(checkpoint.to_path_buf()));
    }
    let ck = Checkpoint::<f32>::load(checkpoint)?;
    let reference = ck
        .final_moving_average
        .ok_or_else(|| HarnessError::Config(format!("{} records no final score", checkpoint.display())))?;
    let mut map = load_map(&cfg.map)?;
    for _ in 0..rotations % 4 {
        map = map.rotate_90();
    }
    let mut agent = build_agent(cfg, cfg.seed, Some(checkpoint))?;
    let queue = hooks.queue.clone().unwrap_or_else(|| cfg.arbitration.queue());
    let mut session = Session::new(cfg, Arc::new(map), 0, queue);
    for _ in 0..cfg.episodes {
        session.run_episode(&mut agent, hooks)?;
    }
    let scores: Vec<f64> = session.records.iter().map(|r| r.score).collect();
    Ok(TransferReport {
        rotations,
        phase1_final_moving_average: reference,
        phase1_stable_goal_episode: ck.stable_goal_episode,
        threshold: reconvergence_threshold(reference),
        reconvergence_episode: reconvergence_episode(&scores, reference, 10),
        records: session.records,
    })
}
