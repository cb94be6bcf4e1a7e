use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Action, AgentPose, GridMap, GOAL_REWARD, MILESTONE_REWARD, STEP_REWARD};

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum EnvError {
    #[error("step called on a terminated episode")]
    EpisodeTerminated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    /// Step budget, turns included.
    pub max_actions: usize,
    pub seed: u64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self { max_actions: 1000, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Milestone {
    Entry,
    Exit,
    Goal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub reward: f64,
    pub new_pose: AgentPose,
    pub terminal: bool,
    pub milestone_fired: Option<Milestone>,
}

/// Episode state over a shared, immutable map.
#[derive(Debug, Clone)]
pub struct MazeEnv {
    map: Arc<GridMap>,
    cfg: EpisodeConfig,
    pose: AgentPose,
    steps: usize,
    score: f64,
    entry_fired: bool,
    exit_fired: bool,
    reached_goal: bool,
    terminal: bool,
}

impl MazeEnv {
    pub fn new(map: Arc<GridMap>, cfg: EpisodeConfig) -> Self {
        assert!(cfg.max_actions > 0, "max_actions must be positive");
        let pose = map.spawn();
        Self {
            map,
            cfg,
            pose,
            steps: 0,
            score: 0.0,
            entry_fired: false,
            exit_fired: false,
            reached_goal: false,
            terminal: false,
        }
    }

    /// Puts the agent back at spawn with a fresh step counter and milestones.
    pub fn reset(&mut self) -> AgentPose {
        self.pose = self.map.spawn();
        self.steps = 0;
        self.score = 0.0;
        self.entry_fired = false;
        self.exit_fired = false;
        self.reached_goal = false;
        self.terminal = false;
        self.pose
    }

    pub fn step(&mut self, action: Action) -> Result<StepOutcome, EnvError> {
        if self.terminal {
            return Err(EnvError::EpisodeTerminated);
        }
        let before = self.pose;
        let mut pose = before;
        match action {
            Action::Forward => {
                let (dx, dy) = pose.heading.delta();
                let (nx, ny) = (pose.x as i64 + dx, pose.y as i64 + dy);
                if self.map.is_traversable(nx, ny) {
                    pose.x = nx as usize;
                    pose.y = ny as usize;
                }
            }
            turn => pose.heading = turn.apply_to_heading(pose.heading),
        }
        self.pose = pose;
        self.steps += 1;

        let mut reward = STEP_REWARD;
        let mut fired = None;
        let (entry, exit) = (self.map.milestone_entry(), self.map.milestone_exit());
        if (pose.x, pose.y) == self.map.goal() {
            self.reached_goal = true;
            reward += GOAL_REWARD;
            fired = Some(super::Milestone::Goal);
        } else if !self.entry_fired && !entry.is_past(before.x, before.y) && entry.is_past(pose.x, pose.y) {
            self.entry_fired = true;
            reward += MILESTONE_REWARD;
            fired = Some(super::Milestone::Entry);
        } else if !self.exit_fired && !exit.is_past(before.x, before.y) && exit.is_past(pose.x, pose.y) {
            self.exit_fired = true;
            reward += MILESTONE_REWARD;
            fired = Some(super::Milestone::Exit);
        }
        self.score += reward;
        self.terminal = self.reached_goal || self.steps >= self.cfg.max_actions;
        Ok(StepOutcome { reward, new_pose: pose, terminal: self.terminal, milestone_fired: fired })
    }

    pub fn map(&self) -> &Arc<GridMap> {
        &self.map
    }

    pub fn config(&self) -> EpisodeConfig {
        self.cfg
    }

    pub fn pose(&self) -> AgentPose {
        self.pose
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn score(&self) -> f64 {
        self.score
    }

    pub fn is_terminal(&self) -> bool {
        self.terminal
    }

    pub fn reached_goal(&self) -> bool {
        self.reached_goal
    }

    pub fn entry_fired(&self) -> bool {
        self.entry_fired
    }

    pub fn exit_fired(&self) -> bool {
        self.exit_fired
    }

    /// Score implied by the milestone flags and the step count.
    pub fn accounted_score(&self) -> f64 {
        accounted_score(self.reached_goal, self.entry_fired, self.exit_fired, self.steps)
    }
}

/// `15000·goal + 1500·entry + 1500·exit − 0.5·steps`.
pub fn accounted_score(goal: bool, entry: bool, exit: bool, steps: usize) -> f64 {
    let ind = |b: bool| if b { 1.0 } else { 0.0 };
    GOAL_REWARD * ind(goal) + MILESTONE_REWARD * (ind(entry) + ind(exit)) + STEP_REWARD * steps as f64
}
