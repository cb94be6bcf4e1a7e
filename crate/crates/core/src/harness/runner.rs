use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{episodes_to_stable_goal, mean_std, median, moving_average, write_records, EpisodeRecord};
use super::{load_map, ExperimentConfig, HarnessError, VisitHeatmap};
use crate::agents::{cardinal_to_action, AdviceQueue, AgentKind, Decision, DecisionSource, DqnAgent};
use crate::oracle::{advise, compute_policy_field, Condition, OracleConfig, PolicyField};
use crate::qnet::Checkpoint;
use crate::render::{render, FrameStack, RenderConfig, TexturePalette};
use crate::telemetry::{FramePayload, NoTelemetry, PoseMessage, RunControl, StateMessage, Telemetry};
use crate::world::{Action, AgentPose, EpisodeConfig, GridMap, MazeEnv, Milestone};
use crate::Scalar;

/// Consecutive goal episodes that count as having learned the task.
pub const STABLE_RUN: usize = 3;

/// Anything that picks actions inside the episode loop.
pub trait Controller<T: Scalar> {
    fn begin_episode(&mut self) {}

    fn act(&mut self, obs: &[T], pose: AgentPose, queue: &AdviceQueue) -> Result<Decision, HarnessError>;

    fn observe(
        &mut self,
        obs: Arc<[T]>,
        action: Action,
        reward: f64,
        next_obs: Arc<[T]>,
        terminal: bool,
    ) -> Result<(), HarnessError>;

    /// Steps taken across all episodes; used to stamp advice.
    fn global_step(&self) -> u64;

    fn advice_active(&self) -> bool {
        false
    }
}

impl<T: Scalar> Controller<T> for DqnAgent<T> {
    fn begin_episode(&mut self) {
        DqnAgent::begin_episode(self);
    }

    fn act(&mut self, obs: &[T], pose: AgentPose, queue: &AdviceQueue) -> Result<Decision, HarnessError> {
        Ok(DqnAgent::act(self, obs, pose.heading, queue)?)
    }

    fn observe(
        &mut self,
        obs: Arc<[T]>,
        action: Action,
        reward: f64,
        next_obs: Arc<[T]>,
        terminal: bool,
    ) -> Result<(), HarnessError> {
        DqnAgent::observe(self, obs, action.index(), reward, next_obs, terminal)?;
        Ok(())
    }

    fn global_step(&self) -> u64 {
        self.env_steps
    }

    fn advice_active(&self) -> bool {
        self.arbiter.active.is_some()
    }
}

/// Walks the shortest path; ignores observations and advice.
#[derive(Debug, Clone)]
pub struct ScriptedOptimal {
    field: PolicyField,
    steps: u64,
}

impl ScriptedOptimal {
    pub fn new(map: &GridMap) -> Self {
        Self { field: compute_policy_field(map), steps: 0 }
    }
}

impl<T: Scalar> Controller<T> for ScriptedOptimal {
    fn act(&mut self, _obs: &[T], pose: AgentPose, _queue: &AdviceQueue) -> Result<Decision, HarnessError> {
        let dir = self.field.direction(pose.x, pose.y).unwrap_or(pose.heading);
        let action = cardinal_to_action(pose.heading, dir);
        Ok(Decision { action, used_advice: false, source: DecisionSource::Policy })
    }

    fn observe(&mut self, _: Arc<[T]>, _: Action, _: f64, _: Arc<[T]>, _: bool) -> Result<(), HarnessError> {
        self.steps += 1;
        Ok(())
    }

    fn global_step(&self) -> u64 {
        self.steps
    }
}

/// Live observers, the pause switch and an optional externally fed queue.
#[derive(Clone)]
pub struct RunHooks {
    pub telemetry: Arc<dyn Telemetry>,
    pub control: RunControl,
    /// Queue shared with an advice server; replaces the session's own queue.
    pub queue: Option<AdviceQueue>,
}

impl Default for RunHooks {
    fn default() -> Self {
        Self { telemetry: Arc::new(NoTelemetry), control: RunControl::new(), queue: None }
    }
}

struct Oracle {
    field: PolicyField,
    cfg: OracleConfig,
    rng: ChaCha8Rng,
}

/// One environment and its bookkeeping across the episodes of a session.
pub struct Session {
    pub index: usize,
    map: Arc<GridMap>,
    palette: TexturePalette,
    render: RenderConfig,
    frames: usize,
    max_actions: usize,
    oracle: Option<Oracle>,
    /// Offset added to episode numbers in state messages so they stay
    /// increasing across sessions.
    episode_offset: u64,
    pub queue: AdviceQueue,
    pub heatmap: VisitHeatmap,
    pub records: Vec<EpisodeRecord>,
}

impl Session {
    pub fn new(cfg: &ExperimentConfig, map: Arc<GridMap>, index: usize, queue: AdviceQueue) -> Self {
        let seed = cfg.seed + index as u64;
        let oracle = cfg.condition.oracle(derive_seed(seed, 2)).map(|oc| Oracle {
            field: compute_policy_field(&map),
            cfg: oc,
            rng: ChaCha8Rng::seed_from_u64(oc.seed),
        });
        Self {
            index,
            palette: TexturePalette::new(cfg.palette),
            render: cfg.render,
            frames: cfg.frames,
            max_actions: cfg.max_actions(),
            oracle,
            episode_offset: (index * cfg.episodes) as u64,
            queue,
            heatmap: VisitHeatmap::new(map.width(), map.height()),
            records: Vec::new(),
            map,
        }
    }

    pub fn map(&self) -> &Arc<GridMap> {
        &self.map
    }

    pub fn run_episode<T: Scalar, C: Controller<T>>(
        &mut self,
        ctrl: &mut C,
        hooks: &RunHooks,
    ) -> Result<EpisodeRecord, HarnessError> {
        let episode = self.records.len();
        let mut env = MazeEnv::new(self.map.clone(), EpisodeConfig { max_actions: self.max_actions, seed: 0 });
        let mut stack = FrameStack::<T>::new(self.frames, self.render.width, self.render.height);
        ctrl.begin_episode();
        let mark = self.queue.clear_and_mark();
        let mut pose = env.reset();
        let first = render::<T>(&self.map, &pose, &self.palette, &self.render);
        let mut obs: Arc<[T]> = stack.push_and_stack(first).expect("frame matches stack").into();
        let mut used = 0u64;
        let digest = self.map.digest();
        while !env.is_terminal() {
            hooks.control.wait_while_paused();
            let now = ctrl.global_step();
            self.queue.set_clock(now);
            if let Some(o) = self.oracle.as_mut() {
                if let Some(ev) = advise(&o.field, &pose, &o.cfg, now, &mut o.rng) {
                    self.queue.push(ev);
                }
            }
            let decision = ctrl.act(&obs, pose, &self.queue)?;
            used += u64::from(decision.used_advice);
            self.heatmap.visit(pose.x, pose.y);
            let out = env.step(decision.action)?;
            pose = out.new_pose;
            let frame = render::<T>(&self.map, &pose, &self.palette, &self.render);
            if hooks.telemetry.wants_state() {
                hooks.telemetry.publish(StateMessage {
                    episode: self.episode_offset + episode as u64,
                    step: env.steps() as u64,
                    pose: PoseMessage::from(pose),
                    score: env.score(),
                    last_action: Some(decision.action),
                    advice_active: decision.used_advice
                        || decision.source == DecisionSource::Recital
                        || ctrl.advice_active(),
                    frame: FramePayload::encode(&frame),
                    map_digest: digest.clone(),
                });
            }
            let next: Arc<[T]> = stack.push_and_stack(frame).expect("frame matches stack").into();
            // Running out of steps is not a property of the state, so only
            // the goal cuts off the bootstrap.
            let terminal = out.milestone_fired == Some(Milestone::Goal);
            ctrl.observe(obs, decision.action, out.reward, next.clone(), terminal)?;
            obs = next;
        }
        let expected = env.accounted_score();
        if (env.score() - expected).abs() > 1e-9 {
            return Err(HarnessError::Accounting { score: env.score(), expected });
        }
        let offered = self.queue.pushed() - mark;
        let record = EpisodeRecord {
            session: self.index,
            episode,
            score: env.score(),
            steps: env.steps(),
            advice_offered: offered,
            advice_used: used.min(offered),
            reached_goal: env.reached_goal(),
        };
        self.records.push(record);
        Ok(record)
    }
}

/// SplitMix64 step; decorrelates the per-purpose seeds of a session.
pub(crate) fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed.wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub struct SessionResult {
    pub index: usize,
    pub records: Vec<EpisodeRecord>,
    pub heatmap: VisitHeatmap,
    /// Trained agent. Its replay buffer is emptied when the session ends.
    pub agent: DqnAgent<f32>,
}

impl SessionResult {
    pub fn stable_goal_episode(&self) -> Option<usize> {
        let goals: Vec<bool> = self.records.iter().map(|r| r.reached_goal).collect();
        episodes_to_stable_goal(&goals, STABLE_RUN)
    }

    pub fn final_moving_average(&self) -> f64 {
        let scores: Vec<f64> = self.records.iter().map(|r| r.score).collect();
        moving_average(&scores, 10).ok().and_then(|m| m.last().copied()).unwrap_or(0.0)
    }
}

/// Checkpoint file of session `index`; sessions beyond one get a suffix.
pub fn checkpoint_path(base: &Path, index: usize, sessions: usize) -> PathBuf {
    if sessions <= 1 {
        return base.to_path_buf();
    }
    let mut s = base.as_os_str().to_owned();
    s.push(format!(".s{index}"));
    PathBuf::from(s)
}

pub(crate) fn build_agent(cfg: &ExperimentConfig, seed: u64, resume: Option<&Path>) -> Result<DqnAgent<f32>, HarnessError> {
    if let Some(path) = resume.filter(|p| p.exists()) {
        let ck = Checkpoint::<f32>::load(path)?;
        if ck.spec != cfg.network_spec() {
            return Err(HarnessError::Config(format!(
                "{} was trained with a different network shape",
                path.display()
            )));
        }
        let mut learner = ck.restore()?;
        learner.cfg = cfg.training.clone();
        let mut agent = DqnAgent::from_learner(cfg.agent, learner, cfg.arbitration, derive_seed(seed, 1));
        agent.env_steps = ck.env_steps;
        return Ok(agent);
    }
    Ok(DqnAgent::new(cfg.agent, cfg.network_spec(), cfg.training.clone(), cfg.arbitration, derive_seed(seed, 1))?)
}

/// Trains one session from scratch (or from its checkpoint).
pub fn run_session(
    cfg: &ExperimentConfig,
    map: Arc<GridMap>,
    index: usize,
    hooks: &RunHooks,
) -> Result<SessionResult, HarnessError> {
    let ck_path = cfg.checkpoint.as_ref().map(|b| checkpoint_path(b, index, cfg.sessions));
    let mut agent = build_agent(cfg, cfg.seed + index as u64, ck_path.as_deref())?;
    let queue = hooks.queue.clone().unwrap_or_else(|| cfg.arbitration.queue());
    let mut session = Session::new(cfg, map, index, queue);
    for _ in 0..cfg.episodes {
        session.run_episode(&mut agent, hooks)?;
    }
    // the replay dominates memory and is not needed once training stops
    agent.learner.replay.clear();
    let result = SessionResult { index, records: session.records, heatmap: session.heatmap, agent };
    if let Some(path) = ck_path {
        let mut ck = Checkpoint::capture(&result.agent.learner, result.agent.env_steps);
        ck.final_moving_average = Some(result.final_moving_average());
        ck.map_digest = Some(session.map.digest());
        ck.episodes_trained = result.records.len();
        ck.stable_goal_episode = result.stable_goal_episode();
        ck.save(&path)?;
    }
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlSummary {
    pub p: String,
    pub q: String,
    /// `KL(p || q)`.
    pub forward: f64,
    /// `KL(q || p)`.
    pub reverse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub agent: AgentKind,
    pub condition: Condition,
    pub map_digest: String,
    pub sessions: usize,
    pub episodes: usize,
    pub mean_score: f64,
    pub std_score: f64,
    pub mean_steps: f64,
    pub goal_rate: f64,
    pub mean_advice_offered: f64,
    pub mean_advice_used: f64,
    /// Per session; `None` when the session never strung three goals together.
    pub stable_goal_episodes: Vec<Option<usize>>,
    /// Median over sessions, counting a censored session as `episodes + 1`.
    pub median_stable_goal_episode: f64,
    pub final_moving_averages: Vec<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub kl: BTreeMap<String, KlSummary>,
}

impl Summary {
    pub fn from_sessions(cfg: &ExperimentConfig, map: &GridMap, sessions: &[SessionResult]) -> Self {
        let all: Vec<&EpisodeRecord> = sessions.iter().flat_map(|s| &s.records).collect();
        let pick = |f: &dyn Fn(&EpisodeRecord) -> f64| all.iter().map(|r| f(r)).collect::<Vec<_>>();
        let (mean_score, std_score) = mean_std(&pick(&|r| r.score)).unwrap_or((0.0, 0.0));
        let mean = |v: Vec<f64>| mean_std(&v).map_or(0.0, |m| m.0);
        let stable: Vec<Option<usize>> = sessions.iter().map(SessionResult::stable_goal_episode).collect();
        let censored: Vec<f64> = stable.iter().map(|s| s.unwrap_or(cfg.episodes + 1) as f64).collect();
        Self {
            agent: cfg.agent,
            condition: cfg.condition,
            map_digest: map.digest(),
            sessions: sessions.len(),
            episodes: cfg.episodes,
            mean_score,
            std_score,
            mean_steps: mean(pick(&|r| r.steps as f64)),
            goal_rate: mean(pick(&|r| f64::from(u8::from(r.reached_goal)))),
            mean_advice_offered: mean(pick(&|r| r.advice_offered as f64)),
            mean_advice_used: mean(pick(&|r| r.advice_used as f64)),
            stable_goal_episodes: stable,
            median_stable_goal_episode: median(&censored).unwrap_or(0.0),
            final_moving_averages: sessions.iter().map(SessionResult::final_moving_average).collect(),
            kl: BTreeMap::new(),
        }
    }
}

pub struct ExperimentResult {
    pub sessions: Vec<SessionResult>,
    /// Visits summed over sessions.
    pub heatmap: VisitHeatmap,
    pub summary: Summary,
}

/// Runs every session of `cfg`. With an output directory, writes one
/// metrics CSV per session, the summed heatmap and a summary JSON.
pub fn run_experiment(cfg: &ExperimentConfig, hooks: &RunHooks) -> Result<ExperimentResult, HarnessError> {
    cfg.validate()?;
    let map = Arc::new(load_map(&cfg.map)?);
    let mut sessions = Vec::with_capacity(cfg.sessions);
    for k in 0..cfg.sessions {
        sessions.push(run_session(cfg, map.clone(), k, hooks)?);
    }
    let mut heatmap = VisitHeatmap::new(map.width(), map.height());
    for s in &sessions {
        heatmap.add(&s.heatmap)?;
    }
    let summary = Summary::from_sessions(cfg, &map, &sessions);
    if let Some(dir) = &cfg.output_dir {
        let label = cfg.label();
        for s in &sessions {
            write_records(&dir.join(format!("{label}_s{}.csv", s.index)), &s.records)?;
        }
        heatmap.write(&dir.join(format!("heatmap_{label}.csv")))?;
        let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
        super::write_file(&dir.join(format!("summary_{label}.json")), json.as_bytes())?;
    }
    Ok(ExperimentResult { sessions, heatmap, summary })
}
