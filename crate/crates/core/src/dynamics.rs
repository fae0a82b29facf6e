//! Concrete two-agent system model.
//!
//! Both agents follow the same explicit-Euler kinematics. The robot and the
//! human act in strict alternation, and each step only touches the acting
//! agent's coordinates.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{OrientedRect, Vec2};

/// Position, speed and heading of a single vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub x: f64,
    pub y: f64,
    pub v: f64,
    pub theta: f64,
}

impl AgentState {
    pub const fn new(x: f64, y: f64, v: f64, theta: f64) -> Self {
        Self { x, y, v, theta }
    }

    pub fn at_rest(x: f64, y: f64, theta: f64) -> Self {
        Self::new(x, y, 0.0, theta)
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn heading_vec(&self) -> Vec2 {
        Vec2::new(self.theta.cos(), self.theta.sin())
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.v.is_finite() && self.theta.is_finite()
    }

    /// The vehicle's body rectangle.
    pub fn footprint(&self, limits: &AgentLimits) -> OrientedRect {
        OrientedRect::new(self.position(), self.theta, limits.length, limits.width)
    }
}

/// Whose move it is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Turn {
    RobotToAct,
    HumanToAct,
}

impl Turn {
    pub fn flipped(self) -> Self {
        match self {
            Turn::RobotToAct => Turn::HumanToAct,
            Turn::HumanToAct => Turn::RobotToAct,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Agent {
    Robot,
    Human,
}

impl std::fmt::Display for Agent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Agent::Robot => "robot",
            Agent::Human => "human",
        })
    }
}

/// Full system state: both vehicles plus the turn indicator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointState {
    pub robot: AgentState,
    pub human: AgentState,
    pub turn: Turn,
}

impl JointState {
    pub fn new(robot: AgentState, human: AgentState, turn: Turn) -> Self {
        Self { robot, human, turn }
    }

    /// The flat `(x_R, y_R, v_R, θ_R, x_H, y_H, v_H, θ_H)` vector.
    pub fn to_vector(&self) -> [f64; 8] {
        let (r, h) = (&self.robot, &self.human);
        [r.x, r.y, r.v, r.theta, h.x, h.y, h.v, h.theta]
    }

    pub fn acting_agent(&self) -> Agent {
        match self.turn {
            Turn::RobotToAct => Agent::Robot,
            Turn::HumanToAct => Agent::Human,
        }
    }
}

/// Steering angle and longitudinal acceleration.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Action {
    pub phi: f64,
    pub a: f64,
}

impl Action {
    pub const ZERO: Action = Action { phi: 0.0, a: 0.0 };

    pub const fn new(phi: f64, a: f64) -> Self {
        Self { phi, a }
    }

    /// Saturates both components at the agent's actuation bounds.
    pub fn clamped(self, limits: &AgentLimits) -> Self {
        Self {
            phi: self.phi.clamp(-limits.phi_max, limits.phi_max),
            a: self.a.clamp(-limits.a_max, limits.a_max),
        }
    }

    pub fn within(&self, limits: &AgentLimits) -> bool {
        self.phi.abs() <= limits.phi_max && self.a.abs() <= limits.a_max
    }
}

/// Actuation bounds and body dimensions of one vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentLimits {
    pub a_max: f64,
    pub phi_max: f64,
    pub v_max: f64,
    pub length: f64,
    pub width: f64,
}

impl Default for AgentLimits {
    fn default() -> Self {
        Self {
            a_max: 2.0,
            phi_max: std::f64::consts::FRAC_PI_4,
            v_max: 5.0,
            length: 2.0,
            width: 1.0,
        }
    }
}

impl AgentLimits {
    /// Radius of the circle circumscribing the body rectangle.
    pub fn circumradius(&self) -> f64 {
        0.5 * self.length.hypot(self.width)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    pub tau: f64,
    pub d_safe: f64,
    pub robot: AgentLimits,
    pub human: AgentLimits,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        Self {
            tau: 0.1,
            d_safe: 1.0,
            robot: AgentLimits::default(),
            human: AgentLimits::default(),
        }
    }
}

impl PhysicalParams {
    pub fn limits(&self, agent: Agent) -> &AgentLimits {
        match agent {
            Agent::Robot => &self.robot,
            Agent::Human => &self.human,
        }
    }

    /// Returns the name of the first violated parameter invariant, if any.
    pub fn check(&self) -> Result<(), String> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(format!("{name} must be positive and finite (got {v})"))
            }
        };
        positive("tau", self.tau)?;
        if self.tau > 0.5 {
            return Err(format!("tau must be at most 0.5 s (got {})", self.tau));
        }
        positive("d_safe", self.d_safe)?;
        for (agent, l) in [("robot", &self.robot), ("human", &self.human)] {
            positive(&format!("{agent}.a_max"), l.a_max)?;
            positive(&format!("{agent}.phi_max"), l.phi_max)?;
            positive(&format!("{agent}.v_max"), l.v_max)?;
            positive(&format!("{agent}.length"), l.length)?;
            positive(&format!("{agent}.width"), l.width)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("{agent} action (phi={phi}, a={a}) violates bounds |phi|<={phi_max}, |a|<={a_max}")]
    ActionOutOfBounds {
        agent: &'static str,
        phi: f64,
        a: f64,
        phi_max: f64,
        a_max: f64,
    },
}

fn check_action(agent: &'static str, u: &Action, limits: &AgentLimits) -> Result<(), DynamicsError> {
    if u.within(limits) {
        Ok(())
    } else {
        Err(DynamicsError::ActionOutOfBounds {
            agent,
            phi: u.phi,
            a: u.a,
            phi_max: limits.phi_max,
            a_max: limits.a_max,
        })
    }
}

/// Kinematic update without the bounds check. Position and heading use the
/// pre-step speed; the new speed is clamped to `[0, v_max]`.
pub(crate) fn integrate(s: &AgentState, u: &Action, limits: &AgentLimits, tau: f64) -> AgentState {
    AgentState {
        x: s.x + s.v * s.theta.cos() * tau,
        y: s.y + s.v * s.theta.sin() * tau,
        v: (s.v + u.a * tau).clamp(0.0, limits.v_max),
        theta: s.theta + s.v * u.phi * tau,
    }
}

/// Advances one agent by one timestep.
pub fn step_agent(
    s: &AgentState,
    u: &Action,
    limits: &AgentLimits,
    tau: f64,
) -> Result<AgentState, DynamicsError> {
    check_action("agent", u, limits)?;
    Ok(integrate(s, u, limits, tau))
}

/// Applies `u` to whichever agent holds the turn and hands the turn over.
pub fn step_joint(
    x: &JointState,
    u: &Action,
    p: &PhysicalParams,
) -> Result<JointState, DynamicsError> {
    let agent = x.acting_agent();
    let limits = p.limits(agent);
    check_action(
        match agent {
            Agent::Robot => "robot",
            Agent::Human => "human",
        },
        u,
        limits,
    )?;
    let mut next = *x;
    match agent {
        Agent::Robot => next.robot = integrate(&x.robot, u, limits, p.tau),
        Agent::Human => next.human = integrate(&x.human, u, limits, p.tau),
    }
    next.turn = x.turn.flipped();
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SafetyMode {
    /// Centers at least `d_safe` apart.
    CenterDistance,
    /// Body rectangles do not intersect.
    #[default]
    RectangleOverlap,
}

pub fn is_safe(x: &JointState, p: &PhysicalParams, mode: SafetyMode) -> bool {
    match mode {
        SafetyMode::CenterDistance => {
            (x.robot.position() - x.human.position()).norm() >= p.d_safe
        }
        SafetyMode::RectangleOverlap => !x
            .robot
            .footprint(&p.robot)
            .intersects(&x.human.footprint(&p.human)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn params() -> PhysicalParams {
        PhysicalParams::default()
    }

    #[test]
    fn straight_unit_speed() {
        let p = params();
        let s = AgentState::new(0.0, 0.0, 1.0, 0.0);
        let n = step_agent(&s, &Action::ZERO, &p.robot, 0.1).unwrap();
        assert_eq!(n, AgentState::new(0.1, 0.0, 1.0, 0.0));
    }

    #[test]
    fn braking_at_rest_is_frozen() {
        let p = params();
        let s = AgentState::new(5.0, 5.0, 0.0, 1.2);
        let n = step_agent(&s, &Action::new(0.3, -1.0), &p.robot, 0.1).unwrap();
        assert_eq!(n, s);
    }

    #[test]
    fn diagonal_step_matches_hand_evaluation() {
        // Values from evaluating each component of g independently.
        let p = params();
        let s = AgentState::new(0.0, 0.0, 2.0, FRAC_PI_4);
        let n = step_agent(&s, &Action::new(0.1, 0.5), &p.robot, 0.1).unwrap();
        assert!((n.x - 0.141_421_356_237_309_53).abs() < 1e-12);
        assert!((n.y - 0.141_421_356_237_309_5).abs() < 1e-12);
        assert!((n.v - 2.05).abs() < 1e-12);
        assert!((n.theta - 0.805_398_163_397_448_3).abs() < 1e-12);
    }

    #[test]
    fn out_of_bounds_action_rejected() {
        let p = params();
        let s = AgentState::new(0.0, 0.0, 1.0, 0.0);
        let err = step_agent(&s, &Action::new(0.0, 2.5), &p.robot, 0.1).unwrap_err();
        assert!(matches!(err, DynamicsError::ActionOutOfBounds { .. }));
        assert!(step_agent(&s, &Action::new(1.0, 0.0), &p.robot, 0.1).is_err());
        // Callers clamp explicitly.
        let ok = Action::new(1.0, 2.5).clamped(&p.robot);
        assert!(step_agent(&s, &ok, &p.robot, 0.1).is_ok());
    }

    #[test]
    fn joint_step_touches_only_actor() {
        let p = params();
        let x = JointState::new(
            AgentState::new(1.0, 2.0, 3.0, 0.4),
            AgentState::new(-4.0, 7.0, 2.0, -1.0),
            Turn::RobotToAct,
        );
        let u = Action::new(0.2, 1.0);
        let a = step_joint(&x, &u, &p).unwrap();
        assert_eq!(a.human, x.human);
        assert_eq!(a.turn, Turn::HumanToAct);
        let b = step_joint(&a, &u, &p).unwrap();
        assert_eq!(b.robot, a.robot);
        assert_eq!(b.turn, Turn::RobotToAct);
    }

    #[test]
    fn safety_far_and_coincident() {
        let p = PhysicalParams {
            d_safe: 2.0,
            ..params()
        };
        let far = JointState::new(
            AgentState::at_rest(0.0, 0.0, 0.0),
            AgentState::at_rest(100.0, 0.0, 0.0),
            Turn::RobotToAct,
        );
        let same = JointState::new(far.robot, far.robot, Turn::RobotToAct);
        for mode in [SafetyMode::CenterDistance, SafetyMode::RectangleOverlap] {
            assert!(is_safe(&far, &p, mode));
            assert!(!is_safe(&same, &p, mode));
        }
    }

    #[test]
    fn rectangles_overlap_cases() {
        // Expected outcomes cross-checked with an independent polygon library.
        let p = params();
        let at = |x: f64, y: f64, th: f64| {
            JointState::new(
                AgentState::at_rest(0.0, 0.0, 0.0),
                AgentState::at_rest(x, y, th),
                Turn::RobotToAct,
            )
        };
        let rect = SafetyMode::RectangleOverlap;
        assert!(!is_safe(&at(1.5, 0.0, 0.0), &p, rect));
        assert!(is_safe(&at(2.5, 0.0, 0.0), &p, rect));
        assert!(!is_safe(&at(1.4, 0.0, FRAC_PI_2), &p, rect));
        assert!(is_safe(&at(1.6, 0.0, FRAC_PI_2), &p, rect));
        assert!(!is_safe(&at(1.9, 0.9, FRAC_PI_4), &p, rect));
    }
}
