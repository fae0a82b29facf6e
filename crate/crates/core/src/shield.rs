//! Model predictive shielding: certify a proposed robot action by rolling the
//! interval transformer forward under backup behaviour, and fall back to the
//! robot backup action whenever certification fails.
//!
//! Robot backup policies here depend only on the robot's own state. The
//! robot's substate under its backup is therefore deterministic and
//! independent of the human, so the check computes each backup action from
//! the concrete robot rollout and feeds it to the transformer as a singleton.
//! Re-deriving the backup from the live state during execution reproduces
//! exactly the action sequence that was certified.


use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controllers::{Controller, ControllerError};
use crate::dynamics::{integrate, Action, AgentState, JointState, PhysicalParams, Turn};
use crate::geometry::{wrap_angle, Aabb, OrientedRect};
use crate::reachability::{
    abstract_step_with, box_is_equilibrium, box_is_safe, ActionBox, Interval, StateBox, Transformer,
};

/// Robot behaviour assumed (and anticipated by the human) during recovery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackupPolicy {
    /// The same action every step.
    ConstantBrake { action: Action },
    /// Steer into the lane at `target_lane_y` (lanes run along +x) and brake
    /// once inside it.
    PullOver {
        target_lane_y: f64,
        brake_rate: f64,
        lane_tolerance: f64,
    },
    /// Brake, unless that would leave the robot at rest inside a zone; then
    /// hold heading and drive through until clear.
    NoStopZone {
        zones: Vec<Aabb>,
        brake_rate: f64,
        through_speed: f64,
    },
}

impl Default for BackupPolicy {
    fn default() -> Self {
        BackupPolicy::ConstantBrake {
            action: Action::new(0.0, -1.0),
        }
    }
}

const PULL_OVER_LATERAL_GAIN: f64 = 0.15;
const PULL_OVER_MAX_APPROACH: f64 = 0.35;
const PULL_OVER_HEADING_GAIN: f64 = 1.5;

impl BackupPolicy {
    pub fn pull_over(target_lane_y: f64) -> Self {
        BackupPolicy::PullOver {
            target_lane_y,
            brake_rate: 1.0,
            lane_tolerance: 0.5,
        }
    }

    pub fn no_stop(zones: Vec<Aabb>) -> Self {
        BackupPolicy::NoStopZone {
            zones,
            brake_rate: 1.0,
            through_speed: 2.0,
        }
    }

    /// The backup action for the given robot state, saturated at the robot's
    /// bounds. Every variant brakes or holds at rest when `v = 0` outside a
    /// zone, so rest states stay fixed.
    pub fn action(&self, robot: &AgentState, p: &PhysicalParams) -> Action {
        let u = match self {
            BackupPolicy::ConstantBrake { action } => *action,
            BackupPolicy::PullOver {
                target_lane_y,
                brake_rate,
                lane_tolerance,
            } => {
                let err = target_lane_y - robot.y;
                let desired = (PULL_OVER_LATERAL_GAIN * err)
                    .clamp(-PULL_OVER_MAX_APPROACH, PULL_OVER_MAX_APPROACH);
                let phi = PULL_OVER_HEADING_GAIN * wrap_angle(desired - robot.theta);
                let a = if err.abs() < *lane_tolerance {
                    -brake_rate
                } else {
                    -0.5 * brake_rate
                };
                Action::new(phi, a)
            }
            BackupPolicy::NoStopZone {
                zones,
                brake_rate,
                through_speed,
            } => {
                if must_drive_through(robot, zones, *brake_rate, p) {
                    let a = if robot.v < *through_speed { *brake_rate } else { 0.0 };
                    Action::new(0.0, a)
                } else {
                    Action::new(0.0, -brake_rate)
                }
            }
        };
        u.clamped(&p.robot)
    }

    pub fn validate(&self) -> Result<(), String> {
        match self {
            BackupPolicy::ConstantBrake { action } if action.a > 0.0 => {
                Err("constant backup must not accelerate".into())
            }
            BackupPolicy::PullOver { brake_rate, lane_tolerance, .. }
                if *brake_rate <= 0.0 || *lane_tolerance <= 0.0 =>
            {
                Err("pull-over brake_rate and lane_tolerance must be positive".into())
            }
            BackupPolicy::NoStopZone { brake_rate, through_speed, .. }
                if *brake_rate <= 0.0 || *through_speed <= 0.0 =>
            {
                Err("no-stop brake_rate and through_speed must be positive".into())
            }
            _ => Ok(()),
        }
    }
}

fn must_drive_through(robot: &AgentState, zones: &[Aabb], brake_rate: f64, p: &PhysicalParams) -> bool {
    let here = robot.footprint(&p.robot);
    if zones.iter().any(|z| here.intersects_aabb(z)) {
        return true;
    }
    if robot.v == 0.0 {
        return false;
    }
    let stop = robot.v * robot.v / (2.0 * brake_rate);
    let stopped = OrientedRect {
        center: robot.position() + robot.heading_vec() * stop,
        ..here
    };
    zones.iter().any(|z| stopped.intersects_aabb(z))
}

/// Everything the recoverability check assumes about recovery behaviour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackupSpec {
    pub robot_backup: BackupPolicy,
    /// Actions the human may take when it cannot certify safety.
    pub human_backup_set: ActionBox,
    /// Abstract rounds that must end in a safe equilibrium.
    pub horizon_k: usize,
    #[serde(default)]
    pub transformer: Transformer,
}

impl Default for BackupSpec {
    fn default() -> Self {
        Self::with_robot_backup(BackupPolicy::default())
    }
}

/// Steering range of the default human backup set.
pub const HUMAN_BACKUP_STEER: f64 = 0.08;

impl BackupSpec {
    pub const DEFAULT_HORIZON: usize = 120;

    /// Braking in `[-1, -0.5]` while steering within `HUMAN_BACKUP_STEER`.
    pub fn default_human_backup_set() -> ActionBox {
        ActionBox::new(
            Interval::new(-1.0, -0.5),
            Interval::new(-HUMAN_BACKUP_STEER, HUMAN_BACKUP_STEER),
        )
    }

    pub fn with_robot_backup(robot_backup: BackupPolicy) -> Self {
        Self {
            robot_backup,
            human_backup_set: Self::default_human_backup_set(),
            horizon_k: Self::DEFAULT_HORIZON,
            transformer: Transformer::default(),
        }
    }

    pub fn validate(&self, p: &PhysicalParams) -> Result<(), String> {
        if self.horizon_k == 0 {
            return Err("horizon_k must be positive".into());
        }
        if self.human_backup_set.a.hi > 0.0 {
            return Err("human backup set must only brake (a.hi <= 0)".into());
        }
        if !self.human_backup_set.is_within(&p.human) {
            return Err("human backup set exceeds human actuation bounds".into());
        }
        self.robot_backup.validate()
    }
}

/// Abstract rollout from `x'`; returns the boxes `X_0 ..= X_k` visited, or
/// `None` as soon as one of `X_0 .. X_{k-1}` fails the safety check.
///
/// Each `X_{t+1}` also covers the half-round state where only the human has
/// moved: position intervals only ever widen, so the robot's position at
/// `X_t` lies inside its interval at `X_{t+1}`.
pub fn backup_rollout(x_prime: &JointState, spec: &BackupSpec, p: &PhysicalParams) -> Option<Vec<StateBox>> {
    let mut boxes = Vec::with_capacity(spec.horizon_k + 1);
    let mut current = StateBox::point(x_prime);
    let mut robot = x_prime.robot;
    for _ in 0..spec.horizon_k {
        if !box_is_safe(&current, p) {
            return None;
        }
        boxes.push(current);
        let u_r = spec.robot_backup.action(&robot, p);
        current = abstract_step_with(spec.transformer, &current, &ActionBox::singleton(&u_r), &spec.human_backup_set, p);
        robot = integrate(&robot, &u_r, &p.robot, p.tau);
    }
    boxes.push(current);
    Some(boxes)
}

/// Sound recoverability check on a post-robot-action state. `true` means
/// every human backup sequence, combined with the robot backup, stays safe
/// for `k` rounds and ends with both agents at rest.
pub fn is_recoverable(x_prime: &JointState, spec: &BackupSpec, p: &PhysicalParams) -> bool {
    debug_assert_eq!(x_prime.turn, Turn::HumanToAct);
    backup_rollout(x_prime, spec, p)
        .and_then(|boxes| boxes.last().copied())
        .is_some_and(|last| box_is_equilibrium(&last, p))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ShieldDecision {
    UsedInner,
    UsedBackup,
}

#[derive(Debug, Error)]
pub enum ShieldError {
    #[error("shield invoked on the human's turn")]
    NotRobotTurn,
    #[error("inner controller failed: {0}")]
    Inner(#[from] ControllerError),
    #[error("inner controller proposed out-of-bounds action (phi={}, a={})", .0.phi, .0.a)]
    InnerOutOfBounds(Action),
}

/// Runs `inner`, keeps its action if the resulting state is recoverable and
/// otherwise substitutes the robot backup action.
pub fn shield_policy(
    x: &JointState,
    inner: &mut dyn Controller,
    spec: &BackupSpec,
    p: &PhysicalParams,
) -> Result<(Action, ShieldDecision), ShieldError> {
    if x.turn != Turn::RobotToAct {
        return Err(ShieldError::NotRobotTurn);
    }
    let proposed = inner.act(x, p)?;
    if !proposed.within(&p.robot) || !proposed.phi.is_finite() || !proposed.a.is_finite() {
        return Err(ShieldError::InnerOutOfBounds(proposed));
    }
    let x_prime = JointState {
        robot: integrate(&x.robot, &proposed, &p.robot, p.tau),
        turn: Turn::HumanToAct,
        ..*x
    };
    if is_recoverable(&x_prime, spec, p) {
        Ok((proposed, ShieldDecision::UsedInner))
    } else {
        Ok((spec.robot_backup.action(&x.robot, p), ShieldDecision::UsedBackup))
    }
}

/// Wraps a backup policy as a controller.
#[derive(Debug, Clone)]
pub struct BackupController(pub BackupPolicy);

impl Controller for BackupController {
    fn act(&mut self, x: &JointState, p: &PhysicalParams) -> Result<Action, ControllerError> {
        Ok(self.0.action(&x.robot, p))
    }
}
