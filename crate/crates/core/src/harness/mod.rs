//! Experiment orchestration: condition sweeps, metrics files, visit heatmaps
//! and the rotation-transfer experiment.

mod heatmap;
mod metrics;
mod runner;
mod transfer;

pub use heatmap::{corridor_second_half, kl_divergence, VisitHeatmap};
pub use metrics::{
    episodes_to_stable_goal, mean_std, median, moving_average, parse_records, read_records, reconvergence_episode,
    reconvergence_threshold, records_to_csv, write_records, EpisodeRecord, CSV_HEADER,
};
pub use runner::{
    checkpoint_path, run_experiment, run_session, Controller, ExperimentResult, KlSummary, RunHooks, ScriptedOptimal,
    Session, SessionResult, Summary, STABLE_RUN,
};
pub use transfer::{transfer_experiment, TransferReport};

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{AgentKind, ArbitrationConfig};
use crate::oracle::Condition;
use crate::qnet::{EpsilonSchedule, NetError, NetworkSpec, TrainingConfig};
use crate::render::{AliasingMode, RenderConfig};
use crate::world::{EnvError, GridMap, MapError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("map {name}: {source}")]
    Map {
        name: String,
        #[source]
        source: MapError,
    },
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("grid {left:?} does not match grid {right:?}")]
    DimensionMismatch { left: (usize, usize), right: (usize, usize) },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("missing checkpoint {0}")]
    MissingCheckpoint(PathBuf),
    #[error("episode score {score} disagrees with the reward decomposition {expected}")]
    Accounting { score: f64, expected: f64 },
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    let io = |source| HarnessError::Io { path: path.to_path_buf(), source };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io)?;
    }
    fs::write(path, bytes).map_err(io)
}

pub(crate) fn read_file(path: &Path) -> Result<String, HarnessError> {
    fs::read_to_string(path).map_err(|source| HarnessError::Io { path: path.to_path_buf(), source })
}

pub const PAPER_MAP: &str = include_str!("../../../../maps/paper20.map");
pub const DESK_MAP: &str = include_str!("../../../../maps/desk12.map");

/// Loads `paper20` or `desk12` from the built-in maps, anything else from disk.
pub fn load_map(source: &str) -> Result<GridMap, HarnessError> {
    let text = match source {
        "paper20" => PAPER_MAP.to_string(),
        "desk12" => DESK_MAP.to_string(),
        path => read_file(Path::new(path))?,
    };
    GridMap::parse(&text).map_err(|source_err| HarnessError::Map { name: source.to_string(), source: source_err })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    /// Two narrow conv stages.
    #[default]
    Desk,
    /// Four conv stages.
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub agent: AgentKind,
    pub condition: Condition,
    /// `paper20`, `desk12` or a map file path.
    pub map: String,
    pub palette: AliasingMode,
    pub episodes: usize,
    pub sessions: usize,
    /// Session `k` is seeded with `seed + k`.
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub serve_port: Option<u16>,
    /// Overrides the agent kind's step cap.
    pub max_actions: Option<usize>,
    /// Resumed from when present, written at the end of each session.
    pub checkpoint: Option<PathBuf>,
    pub frames: usize,
    pub render: RenderConfig,
    pub architecture: Architecture,
    pub training: TrainingConfig,
    pub arbitration: ArbitrationConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ExperimentConfig {
    /// 12x12 aliased map, 32x32 frames, 4-frame stacks, small network.
    pub fn desk() -> Self {
        Self {
            agent: AgentKind::Naa,
            condition: Condition::Hfha,
            map: "desk12".into(),
            palette: AliasingMode::Aliased,
            episodes: 150,
            sessions: 5,
            seed: 0,
            output_dir: None,
            serve_port: None,
            max_actions: None,
            checkpoint: None,
            frames: 4,
            render: RenderConfig::default(),
            architecture: Architecture::Desk,
            training: TrainingConfig {
                batch_size: 32,
                replay_capacity: 20_000,
                min_replay: 500,
                train_every: 8,
                target_sync: Some(250),
                exploration: EpsilonSchedule { start: 1.0, end: 0.05, decay_steps: 5_000 },
                ..TrainingConfig::default()
            },
            arbitration: ArbitrationConfig::default(),
        }
    }

    /// 20x20 map, four conv stages, 50-frame stacks.
    pub fn paper() -> Self {
        Self {
            map: "paper20".into(),
            episodes: 250,
            frames: 50,
            architecture: Architecture::Full,
            training: TrainingConfig { replay_capacity: 4_000, train_every: 1, ..TrainingConfig::default() },
            ..Self::desk()
        }
    }

    pub fn max_actions(&self) -> usize {
        self.max_actions.unwrap_or_else(|| self.agent.max_actions())
    }

    pub fn network_spec(&self) -> NetworkSpec {
        let (f, h, w) = (self.frames, self.render.height, self.render.width);
        match self.architecture {
            Architecture::Desk => NetworkSpec::desk(f, h, w),
            Architecture::Full => NetworkSpec::full(f, h, w),
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.episodes == 0 || self.sessions == 0 {
            return bad("episodes and sessions must be at least 1".into());
        }
        if self.frames == 0 || self.render.width == 0 || self.render.height == 0 {
            return bad("frame stack and render size must be positive".into());
        }
        if self.max_actions == Some(0) {
            return bad("max_actions must be positive".into());
        }
        self.arbitration.validate().map_err(HarnessError::Config)?;
        self.training.validate()?;
        self.network_spec().validate_for_actions()?;
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("experiment config serializes to TOML")
    }

    /// File stem shared by this configuration's outputs.
    pub fn label(&self) -> String {
        format!("{}_{}", self.agent.name(), self.condition.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_maps_load() {
        let p = load_map("paper20").unwrap();
        assert_eq!((p.width(), p.height()), (20, 20));
        let d = load_map("desk12").unwrap();
        assert_eq!((d.width(), d.height()), (12, 12));
        assert!(matches!(load_map("/nonexistent/x.map"), Err(HarnessError::Io { .. })));
    }

    #[test]
    fn config_toml_round_trip() {
        let cfg = ExperimentConfig::desk();
        let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        let partial = ExperimentConfig::from_toml("agent = \"fa\"\nepisodes = 3\n[training]\nbatch_size = 8\n").unwrap();
        assert_eq!(partial.agent, AgentKind::Fa);
        assert_eq!(partial.training.batch_size, 8);
        assert_eq!(partial.training.gamma, 0.95);
        assert!(ExperimentConfig::from_toml("episodes = 0").is_err());
    }

    #[test]
    fn caps_follow_agent_kind() {
        let mut cfg = ExperimentConfig::desk();
        cfg.agent = AgentKind::Baseline;
        assert_eq!(cfg.max_actions(), 1500);
        cfg.agent = AgentKind::Fa;
        assert_eq!(cfg.max_actions(), 1000);
    }
}
