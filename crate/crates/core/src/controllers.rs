//! Inner robot controllers: an aggressive subgoal chaser and a
//! cross-entropy-method planner with a constant-velocity human forecast.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{integrate, Action, AgentLimits, AgentState, JointState, PhysicalParams};
use crate::geometry::{wrap_angle, Vec2};

#[derive(Debug, Clone, Error)]
pub enum ControllerError {
    #[error("controller failed: {0}")]
    Failed(String),
    #[error("remote session disconnected")]
    Disconnected,
}

/// A robot policy. Implementations may keep internal state such as a
/// waypoint index or a random stream.
pub trait Controller {
    fn act(&mut self, x: &JointState, p: &PhysicalParams) -> Result<Action, ControllerError>;
}

/// Ordered waypoints; the last one is the goal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgoalChain {
    pub waypoints: Vec<Vec2>,
    pub arrival_radius: f64,
}

impl SubgoalChain {
    pub fn new(waypoints: Vec<Vec2>, arrival_radius: f64) -> Result<Self, String> {
        let chain = Self {
            waypoints,
            arrival_radius,
        };
        chain.validate()?;
        Ok(chain)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.waypoints.is_empty() {
            return Err("subgoal chain must not be empty".into());
        }
        if self.waypoints.windows(2).any(|w| w[0] == w[1]) {
            return Err("consecutive subgoals must be distinct".into());
        }
        if !(self.arrival_radius > 0.0) {
            return Err("arrival_radius must be positive".into());
        }
        Ok(())
    }

    pub fn goal(&self) -> Vec2 {
        *self.waypoints.last().expect("validated non-empty")
    }

    pub fn last_index(&self) -> usize {
        self.waypoints.len() - 1
    }

    /// Moves `index` past every waypoint already within the arrival radius.
    /// The final waypoint is never skipped.
    pub fn advance(&self, mut index: usize, pos: Vec2) -> usize {
        while index < self.last_index() && (self.waypoints[index] - pos).norm() <= self.arrival_radius {
            index += 1;
        }
        index
    }

    /// Path length from `pos` through the remaining waypoints.
    pub fn remaining(&self, index: usize, pos: Vec2) -> f64 {
        let mut total = (self.waypoints[index] - pos).norm();
        for w in self.waypoints[index..].windows(2) {
            total += (w[1] - w[0]).norm();
        }
        total
    }
}

pub const AGGRESSIVE_STEER_GAIN: f64 = 2.0;

/// Full throttle toward the current waypoint, braking only when inside the
/// braking distance of the goal. The human is ignored.
pub fn aggressive_action(robot: &AgentState, chain: &SubgoalChain, index: usize, limits: &AgentLimits) -> Action {
    let target = chain.waypoints[index];
    let bearing = (target - robot.position()).angle();
    let phi = AGGRESSIVE_STEER_GAIN * wrap_angle(bearing - robot.theta);
    let braking = robot.v * robot.v / (2.0 * limits.a_max);
    let a = if braking >= chain.remaining(index, robot.position()) {
        -limits.a_max
    } else {
        limits.a_max
    };
    Action::new(phi, a).clamped(limits)
}

#[derive(Debug, Clone)]
pub struct Aggressive {
    chain: SubgoalChain,
    index: usize,
}

impl Aggressive {
    pub fn new(chain: SubgoalChain) -> Self {
        Self { chain, index: 0 }
    }

    pub fn waypoint_index(&self) -> usize {
        self.index
    }
}

impl Controller for Aggressive {
    fn act(&mut self, x: &JointState, p: &PhysicalParams) -> Result<Action, ControllerError> {
        self.index = self.chain.advance(self.index, x.robot.position());
        Ok(aggressive_action(&x.robot, &self.chain, self.index, &p.robot))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CemConfig {
    pub horizon: usize,
    pub population: usize,
    pub elites: usize,
    pub iterations: usize,
    /// Initial standard deviations `(acceleration, steering)`.
    pub init_std: (f64, f64),
    pub collision_penalty: f64,
    pub progress_weight: f64,
    /// Extra clearance (m) around the robot body when checking the forecast.
    pub safety_margin: f64,
}

impl Default for CemConfig {
    fn default() -> Self {
        Self {
            horizon: 20,
            population: 64,
            elites: 8,
            iterations: 4,
            init_std: (1.0, 0.3),
            collision_penalty: 1e4,
            progress_weight: 1.0,
            safety_margin: 1.0,
        }
    }
}

impl CemConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.horizon == 0 || self.population == 0 || self.elites == 0 || self.iterations == 0 {
            return Err("CEM horizon, population, elites and iterations must be positive".into());
        }
        if self.elites > self.population {
            return Err("CEM elites must not exceed population".into());
        }
        if self.init_std.0 < 0.0 || self.init_std.1 < 0.0 || self.safety_margin < 0.0 {
            return Err("CEM standard deviations and margin must be nonnegative".into());
        }
        Ok(())
    }
}

/// Return of a candidate sequence: progress along the chain minus the
/// collision penalty if any forecast state is too close.
pub(crate) fn score_sequence(
    x: &JointState,
    seq: &[Action],
    chain: &SubgoalChain,
    index: usize,
    cfg: &CemConfig,
    p: &PhysicalParams,
) -> f64 {
    let mut robot = x.robot;
    let mut idx = chain.advance(index, robot.position());
    let start = chain.remaining(idx, robot.position());
    let human_step = x.human.heading_vec() * (x.human.v * p.tau);
    let mut human = x.human;
    let mut collided = false;
    for u in seq {
        robot = integrate(&robot, u, &p.robot, p.tau);
        collided |= too_close(&robot, &human, cfg.safety_margin, p);
        human.x += human_step.x;
        human.y += human_step.y;
        collided |= too_close(&robot, &human, cfg.safety_margin, p);
        idx = chain.advance(idx, robot.position());
    }
    // Progress measured against the chain position at the start, so that
    // crossing a waypoint does not reset it.
    let progress = start - chain.remaining(idx, robot.position());
    cfg.progress_weight * progress - if collided { cfg.collision_penalty } else { 0.0 }
}

fn too_close(robot: &AgentState, human: &AgentState, margin: f64, p: &PhysicalParams) -> bool {
    robot
        .footprint(&p.robot)
        .inflated(margin)
        .intersects(&human.footprint(&p.human))
}

/// Gaussian over action sequences with a diagonal covariance.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct SequenceDistribution {
    pub mean: Vec<Action>,
    /// Per-step `(accel std, steer std)`.
    pub std: Vec<(f64, f64)>,
}

impl SequenceDistribution {
    fn initial(cfg: &CemConfig) -> Self {
        Self {
            mean: vec![Action::ZERO; cfg.horizon],
            std: vec![cfg.init_std; cfg.horizon],
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng, limits: &AgentLimits) -> Vec<Action> {
        self.mean
            .iter()
            .zip(&self.std)
            .map(|(m, (sa, sp))| {
                let za: f64 = StandardNormal.sample(rng);
                let zp: f64 = StandardNormal.sample(rng);
                Action::new(m.phi + sp * zp, m.a + sa * za).clamped(limits)
            })
            .collect()
    }
}

/// Refits the distribution to the `elites` highest-scoring candidates.
/// Ties keep the earlier candidate.
pub(crate) fn refit(candidates: &[Vec<Action>], scores: &[f64], elites: usize) -> SequenceDistribution {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]));
    let best = &order[..elites.min(order.len())];
    let horizon = candidates[0].len();
    let n = best.len() as f64;
    let mut mean = Vec::with_capacity(horizon);
    let mut std = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let ma = best.iter().map(|&i| candidates[i][t].a).sum::<f64>() / n;
        let mp = best.iter().map(|&i| candidates[i][t].phi).sum::<f64>() / n;
        let va = best.iter().map(|&i| (candidates[i][t].a - ma).powi(2)).sum::<f64>() / n;
        let vp = best.iter().map(|&i| (candidates[i][t].phi - mp).powi(2)).sum::<f64>() / n;
        mean.push(Action::new(mp, ma));
        std.push((va.sqrt(), vp.sqrt()));
    }
    SequenceDistribution { mean, std }
}

/// One CEM iteration: sample, score, refit.
pub(crate) fn cem_iteration(
    dist: &SequenceDistribution,
    x: &JointState,
    chain: &SubgoalChain,
    index: usize,
    cfg: &CemConfig,
    p: &PhysicalParams,
    rng: &mut ChaCha8Rng,
) -> (Vec<Vec<Action>>, Vec<f64>, SequenceDistribution) {
    let candidates: Vec<Vec<Action>> = (0..cfg.population).map(|_| dist.sample(rng, &p.robot)).collect();
    let scores: Vec<f64> = candidates
        .iter()
        .map(|c| score_sequence(x, c, chain, index, cfg, p))
        .collect();
    let next = refit(&candidates, &scores, cfg.elites);
    (candidates, scores, next)
}

/// Plans from `x` and returns the first action of the refined mean.
pub fn cem_plan(
    x: &JointState,
    chain: &SubgoalChain,
    index: usize,
    cfg: &CemConfig,
    p: &PhysicalParams,
    seed: u64,
) -> Action {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dist = SequenceDistribution::initial(cfg);
    for _ in 0..cfg.iterations {
        dist = cem_iteration(&dist, x, chain, index, cfg, p, &mut rng).2;
    }
    dist.mean[0].clamped(&p.robot)
}

/// Receding-horizon CEM controller; replans on every robot turn.
#[derive(Debug, Clone)]
pub struct Cem {
    chain: SubgoalChain,
    index: usize,
    cfg: CemConfig,
    rng: ChaCha8Rng,
}

impl Cem {
    pub fn new(chain: SubgoalChain, cfg: CemConfig, rng: ChaCha8Rng) -> Self {
        Self {
            chain,
            index: 0,
            cfg,
            rng,
        }
    }
}

impl Controller for Cem {
    fn act(&mut self, x: &JointState, p: &PhysicalParams) -> Result<Action, ControllerError> {
        self.index = self.chain.advance(self.index, x.robot.position());
        let seed = self.rng.next_u64();
        Ok(cem_plan(x, &self.chain, self.index, &self.cfg, p, seed))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Turn;
    use std::f64::consts::PI;

    fn params() -> PhysicalParams {
        PhysicalParams::default()
    }

    fn chain(points: &[(f64, f64)]) -> SubgoalChain {
        SubgoalChain::new(points.iter().map(|&(x, y)| Vec2::new(x, y)).collect(), 1.0).unwrap()
    }

    fn lone_robot(robot: AgentState) -> JointState {
        // Human parked far away so it never matters.
        JointState::new(robot, AgentState::at_rest(0.0, 1000.0, 0.0), Turn::RobotToAct)
    }

    #[test]
    fn chain_validation() {
        assert!(SubgoalChain::new(vec![], 1.0).is_err());
        assert!(SubgoalChain::new(vec![Vec2::ZERO, Vec2::ZERO], 1.0).is_err());
        assert!(SubgoalChain::new(vec![Vec2::ZERO], 0.0).is_err());
    }

    #[test]
    fn aggressive_full_throttle_when_aligned() {
        let p = params();
        let c = chain(&[(100.0, 0.0)]);
        let u = aggressive_action(&AgentState::at_rest(0.0, 0.0, 0.0), &c, 0, &p.robot);
        assert_eq!(u, Action::new(0.0, p.robot.a_max));
    }

    #[test]
    fn aggressive_saturates_steering_when_target_behind() {
        let p = params();
        let c = chain(&[(-100.0, 0.0)]);
        let u = aggressive_action(&AgentState::new(0.0, 0.0, 1.0, 0.0), &c, 0, &p.robot);
        assert_eq!(u.phi.abs(), p.robot.phi_max);
    }

    #[test]
    fn aggressive_brakes_inside_braking_distance() {
        // v^2 / (2 a_max) = 25 / 4 = 6.25 m > 2 m.
        let p = params();
        let c = chain(&[(2.0, 0.0)]);
        let u = aggressive_action(&AgentState::new(0.0, 0.0, 5.0, 0.0), &c, 0, &p.robot);
        assert_eq!(u.a, -p.robot.a_max);
        let far = chain(&[(7.0, 0.0)]);
        let u = aggressive_action(&AgentState::new(0.0, 0.0, 5.0, 0.0), &far, 0, &p.robot);
        assert_eq!(u.a, p.robot.a_max);
    }

    #[test]
    fn aggressive_advances_subgoals_and_replays() {
        let p = params();
        let c = chain(&[(10.0, 0.0), (10.0, 10.0)]);
        let mut ctl = Aggressive::new(c.clone());
        let mut x = lone_robot(AgentState::at_rest(0.0, 0.0, 0.0));
        let mut log = Vec::new();
        let mut closest = f64::INFINITY;
        for _ in 0..200 {
            let u = ctl.act(&x, &p).unwrap();
            assert!(u.within(&p.robot));
            log.push((x, u));
            x.robot = integrate(&x.robot, &u, &p.robot, p.tau);
            closest = closest.min((x.robot.position() - c.goal()).norm());
        }
        assert_eq!(ctl.waypoint_index(), 1);
        assert!(closest < 1.0, "closest approach {closest}");
        let mut replay = Aggressive::new(c);
        for (s, u) in log {
            assert_eq!(replay.act(&s, &p).unwrap(), u);
        }
    }

    #[test]
    fn cem_accelerates_on_empty_road() {
        let p = params();
        let c = chain(&[(50.0, 0.0)]);
        let x = lone_robot(AgentState::new(0.0, 0.0, 1.0, 0.0));
        let u = cem_plan(&x, &c, 0, &CemConfig::default(), &p, 42);
        assert!(u.a > 0.0, "{u:?}");
        assert!(u.within(&p.robot));
    }

    #[test]
    fn cem_is_deterministic_per_seed() {
        let p = params();
        let c = chain(&[(30.0, 5.0)]);
        let x = JointState::new(AgentState::new(0.0, 0.0, 2.0, 0.1), AgentState::new(15.0, -5.0, 2.0, PI / 2.0), Turn::RobotToAct);
        let cfg = CemConfig::default();
        assert_eq!(cem_plan(&x, &c, 0, &cfg, &p, 9), cem_plan(&x, &c, 0, &cfg, &p, 9));
        assert_ne!(cem_plan(&x, &c, 0, &cfg, &p, 9), cem_plan(&x, &c, 0, &cfg, &p, 10));
    }

    #[test]
    fn colliding_candidates_rank_below_clear_ones() {
        let p = params();
        let cfg = CemConfig::default();
        assert!(cfg.collision_penalty > cfg.progress_weight * cfg.horizon as f64 * p.robot.v_max * p.tau);
        let c = chain(&[(40.0, 0.0)]);
        // Stopped human 8 m ahead: full throttle collides, braking does not.
        let x = JointState::new(AgentState::new(0.0, 0.0, 3.0, 0.0), AgentState::at_rest(8.0, 0.0, 0.0), Turn::RobotToAct);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let dist = SequenceDistribution::initial(&cfg);
        let mut clear = Vec::new();
        let mut hit = Vec::new();
        for _ in 0..500 {
            let seq = dist.sample(&mut rng, &p.robot);
            let s = score_sequence(&x, &seq, &c, 0, &cfg, &p);
            if s < -cfg.collision_penalty / 2.0 {
                hit.push(s);
            } else {
                clear.push(s);
            }
        }
        assert!(!clear.is_empty() && !hit.is_empty());
        let worst_clear = clear.iter().cloned().fold(f64::INFINITY, f64::min);
        let best_hit = hit.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(best_hit < worst_clear);
    }

    #[test]
    fn two_candidate_refit_picks_better_sequence() {
        let p = params();
        let cfg = CemConfig {
            population: 2,
            elites: 1,
            iterations: 1,
            horizon: 5,
            ..CemConfig::default()
        };
        let c = chain(&[(40.0, 0.0)]);
        let x = lone_robot(AgentState::new(0.0, 0.0, 1.0, 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let (cands, scores, next) = cem_iteration(&SequenceDistribution::initial(&cfg), &x, &c, 0, &cfg, &p, &mut rng);
        let better = if scores[0] >= scores[1] { 0 } else { 1 };
        assert_eq!(next.mean, cands[better]);
        assert!(next.std.iter().all(|&(a, s)| a == 0.0 && s == 0.0));
        // The planner with the same seed returns that candidate's first action.
        assert_eq!(cem_plan(&x, &c, 0, &cfg, &p, 77), cands[better][0]);
    }

    #[test]
    fn cem_without_penalty_reaches_waypoint() {
        let p = params();
        let cfg = CemConfig {
            collision_penalty: 0.0,
            ..CemConfig::default()
        };
        let c = chain(&[(30.0, 0.0)]);
        let mut ctl = Cem::new(c.clone(), cfg, ChaCha8Rng::seed_from_u64(4));
        let mut x = lone_robot(AgentState::at_rest(0.0, 0.0, 0.0));
        let mut reached = false;
        for _ in 0..400 {
            let u = ctl.act(&x, &p).unwrap();
            assert!(u.within(&p.robot));
            x.robot = integrate(&x.robot, &u, &p.robot, p.tau);
            if (x.robot.position() - c.goal()).norm() <= 2.0 {
                reached = true;
                break;
            }
        }
        assert!(reached, "ended at {:?}", x.robot);
    }
}
