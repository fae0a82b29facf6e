//! Human driver models: a social-force driver, an assumption-compliant
//! adversary and a keyboard adapter for live sessions.
//!
//! An assumption-compliant human never knowingly drives into a state where
//! collision is unavoidable, and plays from the backup set `U_H⁰` whenever it
//! cannot certify that its preferred action is safe. [`CompliantHuman`] makes
//! that rule executable.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::controllers::{Controller, ControllerError, SubgoalChain};
use crate::dynamics::{integrate, Action, AgentLimits, AgentState, JointState, PhysicalParams};
use crate::geometry::{closest_on_segment, wrap_angle, Vec2};
use crate::reachability::ActionBox;
use crate::shield::BackupSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SocialForceConfig {
    /// Relaxation rate toward the desired velocity (1/s).
    pub goal_gain: f64,
    pub desired_speed: f64,
    pub agent_repulsion_strength: f64,
    pub agent_repulsion_range: f64,
    pub wall_repulsion_strength: f64,
    pub wall_repulsion_range: f64,
    pub max_force: f64,
    /// Weight of obstacles directly behind the human, in `[0, 1]`; obstacles
    /// ahead always have weight 1.
    pub anisotropy: f64,
}

impl Default for SocialForceConfig {
    fn default() -> Self {
        Self {
            goal_gain: 2.0,
            desired_speed: 3.0,
            agent_repulsion_strength: 15.0,
            agent_repulsion_range: 5.0,
            wall_repulsion_strength: 3.0,
            wall_repulsion_range: 0.4,
            max_force: 5.0,
            anisotropy: 0.2,
        }
    }
}

impl SocialForceConfig {
    pub fn validate(&self) -> Result<(), String> {
        let nonneg = [
            ("goal_gain", self.goal_gain),
            ("desired_speed", self.desired_speed),
            ("agent_repulsion_strength", self.agent_repulsion_strength),
            ("wall_repulsion_strength", self.wall_repulsion_strength),
            ("max_force", self.max_force),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0) {
                return Err(format!("social force {name} must be nonnegative"));
            }
        }
        if !(self.agent_repulsion_range > 0.0 && self.wall_repulsion_range > 0.0) {
            return Err("social force ranges must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.anisotropy) {
            return Err("social force anisotropy must lie in [0, 1]".into());
        }
        Ok(())
    }
}

fn anisotropic_weight(heading: Vec2, toward_obstacle: Vec2, lambda: f64) -> f64 {
    let cos = heading.dot(toward_obstacle);
    lambda + (1.0 - lambda) * 0.5 * (1.0 + cos)
}

/// Net planar force on the human. `target` is `None` once the human has
/// arrived, in which case the attraction term pulls toward rest.
pub fn social_force(
    x: &JointState,
    cfg: &SocialForceConfig,
    target: Option<Vec2>,
    walls: &[Vec<Vec2>],
    p: &PhysicalParams,
) -> Vec2 {
    let h = &x.human;
    let pos = h.position();
    let heading = h.heading_vec();
    let desired = match target.and_then(|t| (t - pos).normalized()) {
        Some(dir) => dir * cfg.desired_speed,
        None => Vec2::ZERO,
    };
    let mut force = (desired - heading * h.v) * cfg.goal_gain;

    let away = pos - x.robot.position();
    if let Some(n) = away.normalized() {
        let gap = away.norm() - p.robot.circumradius() - p.human.circumradius();
        let w = anisotropic_weight(heading, -n, cfg.anisotropy);
        force = force + n * (w * cfg.agent_repulsion_strength * (-gap / cfg.agent_repulsion_range).exp());
    }

    let half_width = 0.5 * p.human.width;
    for wall in walls {
        for seg in wall.windows(2) {
            let q = closest_on_segment(pos, seg[0], seg[1]);
            let d = pos - q;
            if let Some(n) = d.normalized() {
                let gap = d.norm() - half_width;
                let w = anisotropic_weight(heading, -n, cfg.anisotropy);
                force = force + n * (w * cfg.wall_repulsion_strength * (-gap / cfg.wall_repulsion_range).exp());
            }
        }
    }

    let mag = force.norm();
    if mag > cfg.max_force {
        force = force * (cfg.max_force / mag);
    }
    force
}

/// Maps a planar force onto the car's controls: the longitudinal component
/// becomes acceleration and the lateral component becomes the steering angle
/// that produces that lateral acceleration (`v²·φ`), with speed floored at
/// 1 m/s so the car can still turn from rest.
pub fn force_to_action(force: Vec2, h: &AgentState, limits: &AgentLimits) -> Action {
    let heading = h.heading_vec();
    let long = force.dot(heading);
    let lat = force.dot(heading.perp());
    let v = h.v.max(1.0);
    Action::new(lat.atan2(v * v), long).clamped(limits)
}

pub fn social_force_act(
    x: &JointState,
    cfg: &SocialForceConfig,
    target: Option<Vec2>,
    walls: &[Vec<Vec2>],
    p: &PhysicalParams,
) -> Action {
    force_to_action(social_force(x, cfg, target, walls, p), &x.human, &p.human)
}

/// Follows a waypoint route under the social-force model, with an optional
/// start delay during which it holds still.
#[derive(Debug, Clone)]
pub struct SocialForceHuman {
    cfg: SocialForceConfig,
    route: SubgoalChain,
    walls: Vec<Vec<Vec2>>,
    index: usize,
    delay_rounds: usize,
    rounds: usize,
}

impl SocialForceHuman {
    pub fn new(cfg: SocialForceConfig, route: SubgoalChain, walls: Vec<Vec<Vec2>>, delay_rounds: usize) -> Self {
        Self {
            cfg,
            route,
            walls,
            index: 0,
            delay_rounds,
            rounds: 0,
        }
    }
}

impl Controller for SocialForceHuman {
    fn act(&mut self, x: &JointState, p: &PhysicalParams) -> Result<Action, ControllerError> {
        self.rounds += 1;
        if self.rounds <= self.delay_rounds {
            return Ok(Action::new(0.0, -p.human.a_max));
        }
        let pos = x.human.position();
        self.index = self.route.advance(self.index, pos);
        let arrived = self.index == self.route.last_index()
            && (self.route.goal() - pos).norm() <= self.route.arrival_radius;
        let target = (!arrived).then(|| self.route.waypoints[self.index]);
        Ok(social_force_act(x, &self.cfg, target, &self.walls, p))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasePolicy {
    /// Uniform over the full actuation box.
    RandomBounded,
    /// Full throttle toward the next waypoint, ignoring the robot.
    GoalSeeking,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompliantAdversaryConfig {
    pub base_policy: BasePolicy,
    /// The human's own copy of the recovery assumptions. Its robot backup is
    /// the robot behaviour the human anticipates during recovery.
    pub backup_spec: BackupSpec,
    /// When false the human plays its base policy unconditionally.
    pub certify: bool,
    /// Clearance (m) demanded around both bodies during certification.
    pub safety_margin: f64,
    /// Random per-step continuations checked in addition to the six
    /// constant corner sequences of `U_H⁰`.
    pub random_continuations: usize,
}

impl CompliantAdversaryConfig {
    pub fn new(base_policy: BasePolicy, backup_spec: BackupSpec) -> Self {
        Self {
            base_policy,
            backup_spec,
            certify: true,
            safety_margin: 0.5,
            random_continuations: 2,
        }
    }

    /// Checks that the human's backup set is the one the shield assumes.
    pub fn aligned_with(&self, shield: &BackupSpec) -> bool {
        self.backup_spec.human_backup_set == shield.human_backup_set
    }
}

fn sample_box(b: &ActionBox, rng: &mut ChaCha8Rng) -> Action {
    let a = if b.a.width() > 0.0 { rng.random_range(b.a.lo..=b.a.hi) } else { b.a.lo };
    let phi = if b.phi.width() > 0.0 { rng.random_range(b.phi.lo..=b.phi.hi) } else { b.phi.lo };
    Action::new(phi, a)
}

pub fn base_action(
    x: &JointState,
    policy: BasePolicy,
    route: &SubgoalChain,
    index: usize,
    p: &PhysicalParams,
    rng: &mut ChaCha8Rng,
) -> Action {
    let l = &p.human;
    match policy {
        BasePolicy::RandomBounded => Action::new(
            rng.random_range(-l.phi_max..=l.phi_max),
            rng.random_range(-l.a_max..=l.a_max),
        ),
        BasePolicy::GoalSeeking => {
            let bearing = (route.waypoints[index] - x.human.position()).angle();
            let phi = 2.0 * wrap_angle(bearing - x.human.theta);
            Action::new(phi, l.a_max).clamped(l)
        }
    }
}

fn clear(x: &JointState, margin: f64, p: &PhysicalParams) -> bool {
    !x.robot
        .footprint(&p.robot)
        .inflated(margin)
        .intersects(&x.human.footprint(&p.human).inflated(margin))
}

/// Concrete rollout: the human plays `first`, then both agents recover for
/// `k` rounds with the human following `continuation(t)`. True iff every
/// half-step keeps the margin and both agents end at rest.
fn certified_rollout(
    x_prime: &JointState,
    first: &Action,
    continuation: &mut dyn FnMut(usize) -> Action,
    cfg: &CompliantAdversaryConfig,
    p: &PhysicalParams,
) -> bool {
    let mut s = *x_prime;
    s.human = integrate(&s.human, first, &p.human, p.tau);
    if !clear(&s, cfg.safety_margin, p) {
        return false;
    }
    for t in 0..cfg.backup_spec.horizon_k {
        let u_r = cfg.backup_spec.robot_backup.action(&s.robot, p);
        if s.robot.v == 0.0 && s.human.v == 0.0 && u_r.a <= 0.0 {
            return true;
        }
        s.robot = integrate(&s.robot, &u_r, &p.robot, p.tau);
        if !clear(&s, cfg.safety_margin, p) {
            return false;
        }
        s.human = integrate(&s.human, &continuation(t), &p.human, p.tau);
        if !clear(&s, cfg.safety_margin, p) {
            return false;
        }
    }
    s.robot.v == 0.0 && s.human.v == 0.0
}

/// The six constant continuations every certification checks.
fn corner_actions(set: &ActionBox) -> [Action; 6] {
    let phi = |v: f64| v.clamp(set.phi.lo, set.phi.hi);
    [
        Action::new(phi(set.phi.lo), set.a.lo),
        Action::new(phi(0.0), set.a.lo),
        Action::new(phi(set.phi.hi), set.a.lo),
        Action::new(phi(set.phi.lo), set.a.hi),
        Action::new(phi(0.0), set.a.hi),
        Action::new(phi(set.phi.hi), set.a.hi),
    ]
}

/// Whether the human can certify `candidate` from `x'`.
pub fn certify_action(
    x_prime: &JointState,
    candidate: &Action,
    cfg: &CompliantAdversaryConfig,
    p: &PhysicalParams,
    rng: &mut ChaCha8Rng,
) -> bool {
    let set = &cfg.backup_spec.human_backup_set;
    for u in corner_actions(set) {
        if !certified_rollout(x_prime, candidate, &mut |_| u, cfg, p) {
            return false;
        }
    }
    for _ in 0..cfg.random_continuations {
        if !certified_rollout(x_prime, candidate, &mut |_| sample_box(set, rng), cfg, p) {
            return false;
        }
    }
    true
}

/// The compliant decision rule: play the base action if certified, else
/// keep playing the constant continuation committed to at the last
/// certification. With no commitment yet the human samples `U_H⁰`.
pub fn compliant_act(
    x: &JointState,
    cfg: &CompliantAdversaryConfig,
    route: &SubgoalChain,
    index: usize,
    p: &PhysicalParams,
    rng: &mut ChaCha8Rng,
    fallback: &mut Option<Action>,
) -> Action {
    let base = base_action(x, cfg.base_policy, route, index, p, rng);
    if !cfg.certify {
        return base;
    }
    if certify_action(x, &base, cfg, p, rng) {
        let corners = corner_actions(&cfg.backup_spec.human_backup_set);
        *fallback = Some(corners[rng.random_range(0..corners.len())]);
        return base;
    }
    fallback
        .unwrap_or_else(|| sample_box(&cfg.backup_spec.human_backup_set, rng))
        .clamped(&p.human)
}

#[derive(Debug, Clone)]
pub struct CompliantHuman {
    cfg: CompliantAdversaryConfig,
    route: SubgoalChain,
    index: usize,
    rng: ChaCha8Rng,
    fallback: Option<Action>,
}

impl CompliantHuman {
    pub fn new(cfg: CompliantAdversaryConfig, route: SubgoalChain, rng: ChaCha8Rng) -> Self {
        Self {
            cfg,
            route,
            index: 0,
            rng,
            fallback: None,
        }
    }
}

impl Controller for CompliantHuman {
    fn act(&mut self, x: &JointState, p: &PhysicalParams) -> Result<Action, ControllerError> {
        self.index = self.route.advance(self.index, x.human.position());
        Ok(compliant_act(x, &self.cfg, &self.route, self.index, p, &mut self.rng, &mut self.fallback))
    }
}

/// Held arrow keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct KeyState {
    pub up: bool,
    pub down: bool,
    pub left: bool,
    pub right: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    /// Acceleration magnitude for up/down (m/s²).
    pub a_key: f64,
    /// Steering change per round while left/right is held (rad).
    pub phi_step: f64,
    /// Factor applied to the steering angle each round without a steering key.
    pub steer_decay: f64,
    /// Input older than this many seconds is treated as absent.
    pub timeout_s: f64,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            a_key: 1.5,
            phi_step: 0.05,
            steer_decay: 0.5,
            timeout_s: 0.5,
        }
    }
}

/// Turns held-key snapshots into actions. `None` means no fresh input.
#[derive(Debug, Clone)]
pub struct RemoteDriver {
    cfg: RemoteConfig,
    phi: f64,
}

impl RemoteDriver {
    pub fn new(cfg: RemoteConfig) -> Self {
        Self { cfg, phi: 0.0 }
    }

    pub fn act(&mut self, input: Option<KeyState>, limits: &AgentLimits) -> Action {
        let Some(k) = input else {
            self.phi = 0.0;
            return Action::ZERO;
        };
        let a = match (k.up, k.down) {
            (true, false) => self.cfg.a_key,
            (false, true) => -self.cfg.a_key,
            _ => 0.0,
        };
        match (k.left, k.right) {
            (true, false) => self.phi += self.cfg.phi_step,
            (false, true) => self.phi -= self.cfg.phi_step,
            (true, true) => {}
            (false, false) => self.phi *= self.cfg.steer_decay,
        }
        self.phi = self.phi.clamp(-limits.phi_max, limits.phi_max);
        Action::new(self.phi, a).clamped(limits)
    }
}

/// Supplies one input snapshot per round to a remote human.
pub trait CommandSource {
    fn next_command(&mut self) -> Result<Option<KeyState>, ControllerError>;
}

/// Replays a recorded snapshot log; past its end the input is absent.
#[derive(Debug, Clone, Default)]
pub struct CommandLog {
    commands: Vec<Option<KeyState>>,
    cursor: usize,
}

impl CommandLog {
    pub fn new(commands: Vec<Option<KeyState>>) -> Self {
        Self { commands, cursor: 0 }
    }
}

impl CommandSource for CommandLog {
    fn next_command(&mut self) -> Result<Option<KeyState>, ControllerError> {
        let c = self.commands.get(self.cursor).copied().flatten();
        self.cursor += 1;
        Ok(c)
    }
}

pub struct RemoteHuman<S> {
    driver: RemoteDriver,
    source: S,
}

impl<S: CommandSource> RemoteHuman<S> {
    pub fn new(cfg: RemoteConfig, source: S) -> Self {
        Self {
            driver: RemoteDriver::new(cfg),
            source,
        }
    }
}

impl<S: CommandSource> Controller for RemoteHuman<S> {
    fn act(&mut self, _x: &JointState, p: &PhysicalParams) -> Result<Action, ControllerError> {
        let input = self.source.next_command()?;
        Ok(self.driver.act(input, &p.human))
    }
}
