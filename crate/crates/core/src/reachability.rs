//! Interval abstract domain over joint states and the one-round abstract
//! transformer used by the recoverability check.
//!
//! A [`StateBox`] over-approximates a set of joint states as a product of
//! closed intervals. [`abstract_step`] maps a box and two action boxes to a
//! box containing every successor after one robot move followed by one human
//! move, for any state and actions drawn from the inputs.
//!
//! Two transformers are provided. [`Transformer::Widening`] grows positions
//! by `v.hi * tau` in every direction regardless of heading and headings by
//! `v.hi * max|phi| * tau` on both sides; it needs no trigonometric bounds.
//! [`Transformer::Trigonometric`] evaluates the update rule in interval
//! arithmetic, so positions only grow along the headings the box allows.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::dynamics::{Action, AgentLimits, AgentState, JointState, PhysicalParams};

/// Closed interval `[lo, hi]` with finite endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    /// Panics if the endpoints are not finite or not ordered.
    pub fn new(lo: f64, hi: f64) -> Self {
        assert!(
            lo.is_finite() && hi.is_finite() && lo <= hi,
            "invalid interval [{lo}, {hi}]"
        );
        Self { lo, hi }
    }

    pub fn point(v: f64) -> Self {
        Self::new(v, v)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    /// `self ⊆ other`.
    pub fn is_subset_of(&self, other: &Interval) -> bool {
        other.lo <= self.lo && self.hi <= other.hi
    }

    pub fn magnitude(&self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }

    /// Symmetric widening by `r >= 0`.
    fn widen(&self, r: f64) -> Self {
        Self::new(self.lo - r, self.hi + r)
    }

    /// Interval product.
    pub fn mul(&self, o: &Interval) -> Interval {
        let c = [self.lo * o.lo, self.lo * o.hi, self.hi * o.lo, self.hi * o.hi];
        Interval::new(
            c.iter().copied().fold(f64::INFINITY, f64::min),
            c.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        )
    }

    /// Enclosure of `cos` over the interval.
    pub fn cos(&self) -> Interval {
        self.periodic(f64::cos, 0.0)
    }

    /// Enclosure of `sin` over the interval.
    pub fn sin(&self) -> Interval {
        self.periodic(f64::sin, std::f64::consts::FRAC_PI_2)
    }

    /// Bounds a 2π-periodic unit wave `f` whose maxima sit at `peak + 2kπ`
    /// and minima at `peak + π + 2kπ`. The result is padded to absorb the
    /// library function's rounding.
    fn periodic(&self, f: fn(f64) -> f64, peak: f64) -> Interval {
        use std::f64::consts::{PI, TAU};
        const PAD: f64 = 1e-12;
        if self.width() >= TAU {
            return Interval::new(-1.0, 1.0);
        }
        let hits = |at: f64| ((self.lo - at) / TAU).ceil() * TAU + at <= self.hi;
        let (a, b) = (f(self.lo), f(self.hi));
        let hi = if hits(peak) { 1.0 } else { a.max(b) };
        let lo = if hits(peak + PI) { -1.0 } else { a.min(b) };
        Interval::new((lo - PAD).max(-1.0), (hi + PAD).min(1.0))
    }

    /// Gap between two intervals, zero when they overlap.
    pub fn distance(&self, other: &Interval) -> f64 {
        (other.lo - self.hi).max(self.lo - other.hi).max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentBox {
    pub x: Interval,
    pub y: Interval,
    pub v: Interval,
    pub theta: Interval,
}

impl AgentBox {
    pub fn point(s: &AgentState) -> Self {
        Self {
            x: Interval::point(s.x),
            y: Interval::point(s.y),
            v: Interval::point(s.v),
            theta: Interval::point(s.theta),
        }
    }

    pub fn contains(&self, s: &AgentState) -> bool {
        self.x.contains(s.x) && self.y.contains(s.y) && self.v.contains(s.v) && self.theta.contains(s.theta)
    }

    pub fn is_subset_of(&self, o: &AgentBox) -> bool {
        self.x.is_subset_of(&o.x)
            && self.y.is_subset_of(&o.y)
            && self.v.is_subset_of(&o.v)
            && self.theta.is_subset_of(&o.theta)
    }

    pub fn is_at_rest(&self) -> bool {
        self.v.lo == 0.0 && self.v.hi == 0.0
    }

    pub fn is_valid(&self, limits: &AgentLimits) -> bool {
        self.v.lo >= 0.0 && self.v.hi <= limits.v_max
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateBox {
    pub robot: AgentBox,
    pub human: AgentBox,
}

impl StateBox {
    pub fn point(x: &JointState) -> Self {
        Self {
            robot: AgentBox::point(&x.robot),
            human: AgentBox::point(&x.human),
        }
    }

    pub fn contains(&self, x: &JointState) -> bool {
        self.robot.contains(&x.robot) && self.human.contains(&x.human)
    }

    pub fn is_subset_of(&self, o: &StateBox) -> bool {
        self.robot.is_subset_of(&o.robot) && self.human.is_subset_of(&o.human)
    }
}

/// Box of actions: an acceleration range times a steering range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionBox {
    pub a: Interval,
    pub phi: Interval,
}

impl ActionBox {
    pub fn new(a: Interval, phi: Interval) -> Self {
        Self { a, phi }
    }

    pub fn singleton(u: &Action) -> Self {
        Self {
            a: Interval::point(u.a),
            phi: Interval::point(u.phi),
        }
    }

    pub fn contains(&self, u: &Action) -> bool {
        self.a.contains(u.a) && self.phi.contains(u.phi)
    }

    pub fn is_subset_of(&self, o: &ActionBox) -> bool {
        self.a.is_subset_of(&o.a) && self.phi.is_subset_of(&o.phi)
    }

    /// Clips the box to the agent's actuation bounds, so an unbounded
    /// braking range such as `(-inf, -a_min]` becomes `[-a_max, -a_min]`.
    pub fn truncated(a_lo: f64, a_hi: f64, phi_lo: f64, phi_hi: f64, limits: &AgentLimits) -> Self {
        let a_lo = a_lo.max(-limits.a_max);
        let a_hi = a_hi.min(limits.a_max);
        let phi_lo = phi_lo.max(-limits.phi_max);
        let phi_hi = phi_hi.min(limits.phi_max);
        Self::new(Interval::new(a_lo, a_hi), Interval::new(phi_lo, phi_hi))
    }

    pub fn is_within(&self, limits: &AgentLimits) -> bool {
        self.a.magnitude() <= limits.a_max && self.phi.magnitude() <= limits.phi_max
    }
}

/// Choice of one-round abstract transformer. Both are sound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transformer {
    Widening,
    #[default]
    Trigonometric,
}

/// One agent's share of the widening transformer.
pub fn abstract_agent_step(b: &AgentBox, u: &ActionBox, limits: &AgentLimits, tau: f64) -> AgentBox {
    // Same association order as the concrete update so that floating-point
    // rounding can only loosen the bound.
    let reach = b.v.hi * tau;
    let turn = b.v.hi * u.phi.magnitude() * tau;
    AgentBox {
        x: b.x.widen(reach),
        y: b.y.widen(reach),
        v: velocity_step(b, u, limits, tau),
        theta: b.theta.widen(turn),
    }
}

fn velocity_step(b: &AgentBox, u: &ActionBox, limits: &AgentLimits, tau: f64) -> Interval {
    Interval::new(
        (b.v.lo + u.a.lo * tau).clamp(0.0, limits.v_max),
        (b.v.hi + u.a.hi * tau).clamp(0.0, limits.v_max),
    )
}

/// One agent's share of the trigonometric transformer.
pub fn trig_agent_step(b: &AgentBox, u: &ActionBox, limits: &AgentLimits, tau: f64) -> AgentBox {
    // Endpoints follow the concrete evaluation order `x + (v * cos θ) * τ`;
    // rounding is monotone, so the bounds stay sound.
    let shift = |p: &Interval, rate: Interval| {
        let d = b.v.mul(&rate);
        Interval::new(p.lo + d.lo * tau, p.hi + d.hi * tau)
    };
    AgentBox {
        x: shift(&b.x, b.theta.cos()),
        y: shift(&b.y, b.theta.sin()),
        v: velocity_step(b, u, limits, tau),
        theta: shift(&b.theta, u.phi),
    }
}

/// Over-approximates one full round (robot move, then human move).
///
/// The agents' dynamics write disjoint coordinates, so the result also covers
/// the human-then-robot ordering.
pub fn abstract_step(x: &StateBox, u_r: &ActionBox, u_h: &ActionBox, p: &PhysicalParams) -> StateBox {
    StateBox {
        robot: abstract_agent_step(&x.robot, u_r, &p.robot, p.tau),
        human: abstract_agent_step(&x.human, u_h, &p.human, p.tau),
    }
}

/// [`abstract_step`] with a selectable transformer.
pub fn abstract_step_with(
    t: Transformer,
    x: &StateBox,
    u_r: &ActionBox,
    u_h: &ActionBox,
    p: &PhysicalParams,
) -> StateBox {
    match t {
        Transformer::Widening => abstract_step(x, u_r, u_h, p),
        Transformer::Trigonometric => StateBox {
            robot: trig_agent_step(&x.robot, u_r, &p.robot, p.tau),
            human: trig_agent_step(&x.human, u_h, &p.human, p.tau),
        },
    }
}

/// Minimum centre distance the two position boxes must keep so that every
/// contained state is safe under both safety modes.
pub fn box_safety_threshold(p: &PhysicalParams) -> f64 {
    p.d_safe + p.robot.circumradius() + p.human.circumradius()
}

/// Largest `a |cos θ| + b |sin θ|` over `theta`.
fn max_projection(theta: &Interval, a: f64, b: f64) -> f64 {
    let f = |t: f64| a * t.cos().abs() + b * t.sin().abs();
    let peak = b.atan2(a);
    // The maximum `hypot(a, b)` is attained at `±peak + kπ`.
    for c in [peak, -peak] {
        let k = ((theta.lo - c) / PI).ceil();
        if c + k * PI <= theta.hi {
            return a.hypot(b);
        }
    }
    f(theta.lo).max(f(theta.hi))
}

/// Axis-aligned bounds of the agent's body over every state in the box.
fn body_bounds(b: &AgentBox, l: &AgentLimits) -> (Interval, Interval) {
    let (hl, hw) = (0.5 * l.length, 0.5 * l.width);
    let ex = max_projection(&b.theta, hl, hw);
    let ey = max_projection(&b.theta, hw, hl);
    (b.x.widen(ex), b.y.widen(ey))
}

/// Slack absorbing rounding in the body-bounds test.
const BODY_GAP_EPS: f64 = 1e-9;

/// Conservative lift of the safety predicate: true only if every state in
/// the box is safe. Boxes failing the circumscribed-disc clearance are still
/// accepted when the centres keep `d_safe` and the bodies' axis-aligned
/// bounds are disjoint.
pub fn box_is_safe(x: &StateBox, p: &PhysicalParams) -> bool {
    let dx = x.robot.x.distance(&x.human.x);
    let dy = x.robot.y.distance(&x.human.y);
    let d = dx.hypot(dy);
    if d >= box_safety_threshold(p) {
        return true;
    }
    if d < p.d_safe + BODY_GAP_EPS {
        return false;
    }
    let (rx, ry) = body_bounds(&x.robot, &p.robot);
    let (hx, hy) = body_bounds(&x.human, &p.human);
    rx.distance(&hx) > BODY_GAP_EPS || ry.distance(&hy) > BODY_GAP_EPS
}

/// True iff the box is safe and both agents are certainly at rest.
pub fn box_is_equilibrium(x: &StateBox, p: &PhysicalParams) -> bool {
    x.robot.is_at_rest() && x.human.is_at_rest() && box_is_safe(x, p)
}
