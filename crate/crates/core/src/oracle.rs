//! Synthetic teacher with full knowledge of the map.

use std::collections::VecDeque;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agents::{AdviceEvent, AdviceSource};
use crate::world::{AgentPose, Cardinal, GridMap};

/// Advice frequency `p` (per environment step) and accuracy `q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub frequency: f64,
    pub accuracy: f64,
    pub seed: u64,
}

impl OracleConfig {
    pub fn new(frequency: f64, accuracy: f64, seed: u64) -> Result<Self, String> {
        let cfg = Self { frequency, accuracy, seed };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [("frequency", self.frequency), ("accuracy", self.accuracy)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("oracle {name} {v} outside [0, 1]"));
            }
        }
        Ok(())
    }
}

/// Teacher condition of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Hfha,
    Hfla,
    Lfha,
    Lfla,
    /// Advice comes from a person over the advice server.
    Human,
    None,
}

impl Condition {
    pub const ORACLE: [Condition; 4] = [Condition::Hfha, Condition::Hfla, Condition::Lfha, Condition::Lfla];

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "hfha" => Self::Hfha,
            "hfla" => Self::Hfla,
            "lfha" => Self::Lfha,
            "lfla" => Self::Lfla,
            "human" => Self::Human,
            "none" => Self::None,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Hfha => "hfha",
            Self::Hfla => "hfla",
            Self::Lfha => "lfha",
            Self::Lfla => "lfla",
            Self::Human => "human",
            Self::None => "none",
        }
    }

    /// `(frequency, accuracy)` of the synthetic oracle, if this condition
    /// uses one.
    pub fn oracle_parameters(self) -> Option<(f64, f64)> {
        match self {
            Self::Hfha => Some((0.05, 1.0)),
            Self::Hfla => Some((0.05, 0.5)),
            Self::Lfha => Some((0.01, 1.0)),
            Self::Lfla => Some((0.01, 0.5)),
            Self::Human | Self::None => None,
        }
    }

    pub fn oracle(self, seed: u64) -> Option<OracleConfig> {
        self.oracle_parameters().map(|(frequency, accuracy)| OracleConfig { frequency, accuracy, seed })
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Optimal move direction for every cell, toward the goal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyField {
    width: usize,
    height: usize,
    /// `None` for walls, the goal itself and cells that cannot reach it.
    directions: Vec<Option<Cardinal>>,
    distances: Vec<Option<u32>>,
}

impl PolicyField {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn direction(&self, x: usize, y: usize) -> Option<Cardinal> {
        self.directions[y * self.width + x]
    }

    /// Steps to the goal, `None` if unreachable or not traversable.
    pub fn distance(&self, x: usize, y: usize) -> Option<u32> {
        self.distances[y * self.width + x]
    }

    /// Cells visited when following the field from `start`, excluding start.
    pub fn follow(&self, start: (usize, usize)) -> Option<Vec<(usize, usize)>> {
        let (mut x, mut y) = start;
        let mut path = Vec::new();
        while self.distance(x, y)? > 0 {
            let (dx, dy) = self.direction(x, y)?.delta();
            x = (x as i64 + dx) as usize;
            y = (y as i64 + dy) as usize;
            path.push((x, y));
            if path.len() > self.width * self.height {
                return None;
            }
        }
        Some(path)
    }
}

/// Reverse BFS from the goal. Each reachable cell points at a neighbor one
/// step closer; ties go to the first of north, east, south, west.
pub fn compute_policy_field(map: &GridMap) -> PolicyField {
    let (w, h) = (map.width(), map.height());
    let mut distances = vec![None; w * h];
    let goal = map.goal();
    distances[map.index(goal.0, goal.1)] = Some(0u32);
    let mut frontier = VecDeque::from([goal]);
    while let Some((x, y)) = frontier.pop_front() {
        let d = distances[map.index(x, y)].expect("queued cells have a distance");
        for dir in Cardinal::ALL {
            if let Some((nx, ny)) = map.neighbor(x, y, dir).filter(|&(nx, ny)| map.cell(nx, ny).is_traversable()) {
                let slot = &mut distances[map.index(nx, ny)];
                if slot.is_none() {
                    *slot = Some(d + 1);
                    frontier.push_back((nx, ny));
                }
            }
        }
    }
    let mut directions = vec![None; w * h];
    for y in 0..h {
        for x in 0..w {
            let Some(d) = distances[map.index(x, y)] else { continue };
            if d == 0 {
                continue;
            }
            directions[map.index(x, y)] = Cardinal::ALL.into_iter().find(|&dir| {
                map.neighbor(x, y, dir).is_some_and(|(nx, ny)| distances[map.index(nx, ny)] == Some(d - 1))
            });
        }
    }
    PolicyField { width: w, height: h, directions, distances }
}

/// One oracle draw for the current pose: with probability `frequency` emit
/// advice, which is the field direction with probability `accuracy` and a
/// uniformly random cardinal otherwise. Cells without a field direction get
/// random advice.
pub fn advise<R: Rng + ?Sized>(
    field: &PolicyField,
    pose: &AgentPose,
    cfg: &OracleConfig,
    step: u64,
    rng: &mut R,
) -> Option<AdviceEvent> {
    if rng.gen::<f64>() >= cfg.frequency {
        return None;
    }
    let accurate = rng.gen::<f64>() < cfg.accuracy;
    let random = Cardinal::from_index(rng.gen_range(0..4));
    let direction = match field.direction(pose.x, pose.y) {
        Some(d) if accurate => d,
        _ => random,
    };
    Some(AdviceEvent { direction, issued_at: step, source: AdviceSource::Oracle })
}
