//! Episode stepping, batch runs, metrics and output formats.
//!
//! [`Episode`] is the single stepping path for both batch runs and live
//! sessions.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controllers::{Aggressive, Cem, CemConfig, Controller};
use crate::dynamics::{is_safe, step_joint, Action, JointState, PhysicalParams, SafetyMode, Turn};
use crate::humans::{
    BasePolicy, CommandLog, CompliantAdversaryConfig, CompliantHuman, KeyState, RemoteConfig, RemoteHuman,
    SocialForceConfig, SocialForceHuman,
};
use crate::reachability::{ActionBox, Transformer};
use crate::rng::{stream, CEM_STREAM, HUMAN_STREAM, JITTER_STREAM};
use crate::scenarios::Scenario;
use crate::shield::{shield_policy, BackupPolicy, BackupSpec, ShieldDecision};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    Aggressive,
    Cem,
    /// The aggressive controller wrapped in the shield.
    Shield,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackupKind {
    #[default]
    Brake,
    PullOver,
    NoStop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HumanKind {
    SocialForce,
    CompliantRandom,
    CompliantGoal,
    Remote,
}

/// Per-seed variation of the simulated social-force driver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HumanVariation {
    /// Desired speed is scaled by a uniform factor in `[1 - j, 1 + j]`.
    pub desired_speed_jitter: f64,
    /// The human waits a uniform number of rounds up to this many seconds.
    pub max_start_delay_s: f64,
}

impl Default for HumanVariation {
    fn default() -> Self {
        Self {
            desired_speed_jitter: 0.15,
            max_start_delay_s: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub controller: ControllerKind,
    pub backup: BackupKind,
    pub human: HumanKind,
    pub seed: u64,
    pub run_count: usize,
    pub horizon_k: usize,
    pub transformer: Transformer,
    pub human_backup_set: ActionBox,
    pub cem: CemConfig,
    pub social: SocialForceConfig,
    pub variation: HumanVariation,
    pub remote: RemoteConfig,
    /// Input snapshots for a replayed remote human, one per round.
    pub commands: Option<Vec<Option<KeyState>>>,
    pub log_trajectories: bool,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("run_count must be at least 1")]
    NoRuns,
    #[error("a remote human supports exactly one run")]
    RemoteBatch,
    #[error("a replayed remote human needs a command log")]
    MissingCommands,
    #[error("pull-over backup needs a scenario with pull_over_lane_y")]
    NoPullOverLane,
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

impl RunConfig {
    pub fn new(scenario: Scenario, controller: ControllerKind, human: HumanKind) -> Self {
        Self {
            scenario,
            controller,
            backup: BackupKind::Brake,
            human,
            seed: 0,
            run_count: 1,
            horizon_k: BackupSpec::DEFAULT_HORIZON,
            transformer: Transformer::default(),
            human_backup_set: BackupSpec::default_human_backup_set(),
            cem: CemConfig::default(),
            social: SocialForceConfig::default(),
            variation: HumanVariation::default(),
            remote: RemoteConfig::default(),
            commands: None,
            log_trajectories: false,
        }
    }

    pub fn backup_spec(&self) -> Result<BackupSpec, ConfigError> {
        let policy = match self.backup {
            BackupKind::Brake => BackupPolicy::default(),
            BackupKind::PullOver => {
                BackupPolicy::pull_over(self.scenario.pull_over_lane_y.ok_or(ConfigError::NoPullOverLane)?)
            }
            BackupKind::NoStop => BackupPolicy::no_stop(self.scenario.no_stop_zones.clone()),
        };
        let mut spec = BackupSpec::with_robot_backup(policy);
        spec.horizon_k = self.horizon_k;
        spec.transformer = self.transformer;
        spec.human_backup_set = self.human_backup_set;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.run_count == 0 {
            return Err(ConfigError::NoRuns);
        }
        if self.human == HumanKind::Remote && self.run_count != 1 {
            return Err(ConfigError::RemoteBatch);
        }
        self.scenario
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.backup_spec()?
            .validate(&self.scenario.physical)
            .map_err(ConfigError::Invalid)?;
        self.cem.validate().map_err(ConfigError::Invalid)?;
        self.social.validate().map_err(ConfigError::Invalid)?;
        Ok(())
    }

    fn build_robot(&self, seed: u64) -> Box<dyn Controller + Send> {
        let chain = self.scenario.robot_subgoals.clone();
        match self.controller {
            ControllerKind::Aggressive | ControllerKind::Shield => Box::new(Aggressive::new(chain)),
            ControllerKind::Cem => Box::new(Cem::new(chain, self.cem.clone(), stream(seed, CEM_STREAM))),
        }
    }

    fn build_human(&self, seed: u64) -> Result<Box<dyn Controller + Send>, ConfigError> {
        let route = self.scenario.human_subgoals.clone();
        let compliant = |base| -> Result<Box<dyn Controller + Send>, ConfigError> {
            let cfg = CompliantAdversaryConfig::new(base, self.backup_spec()?);
            Ok(Box::new(CompliantHuman::new(cfg, route.clone(), stream(seed, HUMAN_STREAM))))
        };
        Ok(match self.human {
            HumanKind::SocialForce => {
                let mut rng = stream(seed, JITTER_STREAM);
                let mut social = self.social.clone();
                let j = self.variation.desired_speed_jitter;
                if j > 0.0 {
                    social.desired_speed *= 1.0 + rng.random_range(-j..=j);
                }
                let max_delay = (self.variation.max_start_delay_s / self.scenario.physical.tau).round() as usize;
                let delay = rng.random_range(0..=max_delay);
                Box::new(SocialForceHuman::new(social, route, self.scenario.walls.clone(), delay))
            }
            HumanKind::CompliantRandom => compliant(BasePolicy::RandomBounded)?,
            HumanKind::CompliantGoal => compliant(BasePolicy::GoalSeeking)?,
            HumanKind::Remote => {
                let commands = self.commands.clone().ok_or(ConfigError::MissingCommands)?;
                Box::new(RemoteHuman::new(self.remote, CommandLog::new(commands)))
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    ReachedGoal,
    Unsafe,
    Timeout,
    Aborted,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::ReachedGoal => "reached_goal",
            Outcome::Unsafe => "unsafe",
            Outcome::Timeout => "timeout",
            Outcome::Aborted => "aborted",
        }
    }
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One half-round: the state in which `agent` acted and what it did.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEntry {
    pub round: usize,
    pub turn: Turn,
    pub state: [f64; 8],
    /// `(phi, a)`.
    pub action: [f64; 2],
    pub decision: Option<ShieldDecision>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub outcome: Outcome,
    pub abort_reason: Option<String>,
    pub rounds: usize,
    pub time_to_goal_s: Option<f64>,
    pub shield_activations: usize,
    pub stops_in_zone: usize,
    pub final_state: JointState,
    pub trajectory: Option<Vec<TrajectoryEntry>>,
}

/// What happened in the round just stepped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundReport {
    pub round: usize,
    pub state: JointState,
    pub decision: Option<ShieldDecision>,
    pub outcome: Option<Outcome>,
}

pub struct Episode {
    seed: u64,
    params: PhysicalParams,
    scenario: Scenario,
    state: JointState,
    round: usize,
    robot: Box<dyn Controller + Send>,
    human: Box<dyn Controller + Send>,
    shield: Option<BackupSpec>,
    activations: usize,
    stops_in_zone: usize,
    trajectory: Option<Vec<TrajectoryEntry>>,
    outcome: Option<Outcome>,
    abort_reason: Option<String>,
}

impl Episode {
    pub fn new(cfg: &RunConfig, seed: u64) -> Result<Self, ConfigError> {
        let human = cfg.build_human(seed)?;
        Self::with_human(cfg, seed, human)
    }

    /// Builds an episode around an externally supplied human policy.
    pub fn with_human(cfg: &RunConfig, seed: u64, human: Box<dyn Controller + Send>) -> Result<Self, ConfigError> {
        let shield = match cfg.controller {
            ControllerKind::Shield => Some(cfg.backup_spec()?),
            _ => None,
        };
        Ok(Self {
            seed,
            params: cfg.scenario.physical,
            scenario: cfg.scenario.clone(),
            state: cfg.scenario.initial_state(),
            round: 0,
            robot: cfg.build_robot(seed),
            human,
            shield,
            activations: 0,
            stops_in_zone: 0,
            trajectory: cfg.log_trajectories.then(Vec::new),
            outcome: None,
            abort_reason: None,
        })
    }

    pub fn state(&self) -> &JointState {
        &self.state
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn outcome(&self) -> Option<Outcome> {
        self.outcome
    }

    pub fn is_done(&self) -> bool {
        self.outcome.is_some()
    }

    fn abort(&mut self, reason: String) {
        self.outcome = Some(Outcome::Aborted);
        self.abort_reason = Some(reason);
    }

    fn log(&mut self, turn: Turn, before: &JointState, u: &Action, decision: Option<ShieldDecision>) {
        if let Some(t) = &mut self.trajectory {
            t.push(TrajectoryEntry {
                round: self.round,
                turn,
                state: before.to_vector(),
                action: [u.phi, u.a],
                decision,
            });
        }
    }

    /// Applies `u` for the acting agent; returns false if the episode ended.
    fn apply(&mut self, u: Action, decision: Option<ShieldDecision>) -> bool {
        let before = self.state;
        match step_joint(&before, &u, &self.params) {
            Ok(next) => self.state = next,
            Err(e) => {
                self.abort(e.to_string());
                return false;
            }
        }
        self.log(before.turn, &before, &u, decision);
        if before.turn == Turn::RobotToAct && before.robot.v > 0.0 && self.state.robot.v == 0.0 {
            let body = self.state.robot.footprint(&self.params.robot);
            if self.scenario.no_stop_zones.iter().any(|z| body.intersects_aabb(z)) {
                self.stops_in_zone += 1;
            }
        }
        if !is_safe(&self.state, &self.params, SafetyMode::RectangleOverlap) {
            self.outcome = Some(Outcome::Unsafe);
            return false;
        }
        true
    }

    /// Plays one robot half-step and one human half-step.
    pub fn step_round(&mut self) -> RoundReport {
        let mut decision = None;
        if self.outcome.is_none() {
            let robot_action = match &self.shield {
                Some(spec) => shield_policy(&self.state, self.robot.as_mut(), spec, &self.params)
                    .map(|(u, d)| (u, Some(d)))
                    .map_err(|e| e.to_string()),
                None => self.robot.act(&self.state, &self.params).map(|u| (u, None)).map_err(|e| e.to_string()),
            };
            match robot_action {
                Ok((u, d)) => {
                    decision = d;
                    if d == Some(ShieldDecision::UsedBackup) {
                        self.activations += 1;
                    }
                    if self.apply(u, d) {
                        match self.human.act(&self.state, &self.params) {
                            Ok(u) => {
                                self.apply(u, None);
                            }
                            Err(e) => self.abort(e.to_string()),
                        }
                    }
                }
                Err(e) => self.abort(e),
            }
            self.round += 1;
            if self.outcome.is_none() {
                if self.scenario.robot_goal.reached(self.state.robot.position()) {
                    self.outcome = Some(Outcome::ReachedGoal);
                } else if self.round >= self.scenario.episode_cap {
                    self.outcome = Some(Outcome::Timeout);
                }
            }
        }
        RoundReport {
            round: self.round,
            state: self.state,
            decision,
            outcome: self.outcome,
        }
    }

    /// Ends the episode as aborted unless it already has an outcome.
    pub fn abort_with(&mut self, reason: impl Into<String>) {
        if self.outcome.is_none() {
            self.abort(reason.into());
        }
    }

    pub fn into_record(self) -> RunRecord {
        let outcome = self.outcome.unwrap_or(Outcome::Aborted);
        RunRecord {
            seed: self.seed,
            outcome,
            abort_reason: self.abort_reason,
            rounds: self.round,
            time_to_goal_s: (outcome == Outcome::ReachedGoal).then(|| self.round as f64 * self.params.tau),
            shield_activations: self.activations,
            stops_in_zone: self.stops_in_zone,
            final_state: self.state,
            trajectory: self.trajectory,
        }
    }
}

pub fn run_episode(cfg: &RunConfig, seed: u64) -> Result<RunRecord, ConfigError> {
    let mut ep = Episode::new(cfg, seed)?;
    while !ep.is_done() {
        ep.step_round();
    }
    Ok(ep.into_record())
}

/// Runs seeds `cfg.seed .. cfg.seed + cfg.run_count` on up to `parallelism`
/// threads. Records come back in seed order.
pub fn run_batch(cfg: &RunConfig, parallelism: usize) -> Result<Vec<RunRecord>, ConfigError> {
    cfg.validate()?;
    let seeds: Vec<u64> = (0..cfg.run_count as u64).map(|i| cfg.seed.wrapping_add(i)).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
    pool.install(|| seeds.par_iter().map(|&s| run_episode(cfg, s)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub runs: usize,
    pub unsafe_runs: usize,
    pub unsafe_fraction: f64,
    pub reached_goal: usize,
    pub timeouts: usize,
    pub aborted: usize,
    /// Over runs that reached the goal; `None` if there were none.
    pub mean_time_to_goal_s: Option<f64>,
    /// Population standard deviation over the same runs.
    pub std_time_to_goal_s: Option<f64>,
    pub mean_shield_activations: f64,
    pub total_stops_in_zone: usize,
}

pub fn summarize(records: &[RunRecord]) -> Summary {
    let n = records.len();
    let count = |o| records.iter().filter(|r| r.outcome == o).count();
    let times: Vec<f64> = records.iter().filter_map(|r| r.time_to_goal_s).collect();
    let (mean, std) = if times.is_empty() {
        (None, None)
    } else {
        let m = times.iter().sum::<f64>() / times.len() as f64;
        let var = times.iter().map(|t| (t - m).powi(2)).sum::<f64>() / times.len() as f64;
        (Some(m), Some(var.sqrt()))
    };
    let unsafe_runs = count(Outcome::Unsafe);
    Summary {
        runs: n,
        unsafe_runs,
        unsafe_fraction: if n == 0 { 0.0 } else { unsafe_runs as f64 / n as f64 },
        reached_goal: count(Outcome::ReachedGoal),
        timeouts: count(Outcome::Timeout),
        aborted: count(Outcome::Aborted),
        mean_time_to_goal_s: mean,
        std_time_to_goal_s: std,
        mean_shield_activations: if n == 0 {
            0.0
        } else {
            records.iter().map(|r| r.shield_activations).sum::<usize>() as f64 / n as f64
        },
        total_stops_in_zone: records.iter().map(|r| r.stops_in_zone).sum(),
    }
}

impl std::fmt::Display for Summary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.2}"));
        writeln!(f, "runs                 {}", self.runs)?;
        writeln!(f, "unsafe               {} ({:.2})", self.unsafe_runs, self.unsafe_fraction)?;
        writeln!(f, "reached goal         {}", self.reached_goal)?;
        writeln!(f, "timeouts             {}", self.timeouts)?;
        writeln!(f, "aborted              {}", self.aborted)?;
        writeln!(
            f,
            "time to goal (s)     {} ± {}",
            opt(self.mean_time_to_goal_s),
            opt(self.std_time_to_goal_s)
        )?;
        writeln!(f, "shield activations   {:.2} per run", self.mean_shield_activations)?;
        write!(f, "stops in zone        {}", self.total_stops_in_zone)
    }
}

pub const CSV_HEADER: [&str; 6] = [
    "seed",
    "outcome",
    "rounds",
    "time_to_goal_s",
    "shield_activations",
    "stops_in_zone",
];

pub fn write_csv<W: Write>(records: &[RunRecord], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record([
            r.seed.to_string(),
            r.outcome.to_string(),
            r.rounds.to_string(),
            r.time_to_goal_s.map_or_else(String::new, |t| format!("{t:.6}")),
            r.shield_activations.to_string(),
            r.stops_in_zone.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One JSON object per half-step.
pub fn write_trajectory<W: Write>(trajectory: &[TrajectoryEntry], mut out: W) -> std::io::Result<()> {
    for e in trajectory {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
