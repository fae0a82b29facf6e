//! Randomized property checks shared by the property tests and the
//! acceptance suite. Each check runs a deterministic proptest runner.

use std::f64::consts::PI;

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};

use shieldsim_core::dynamics::{
    is_safe, step_agent, step_joint, Action, AgentLimits, AgentState, JointState, PhysicalParams, SafetyMode,
    Turn,
};
use shieldsim_core::reachability::{
    abstract_step_with, box_is_safe, ActionBox, AgentBox, Interval, StateBox, Transformer,
};

pub const CASES: u32 = 10_000;

#[allow(dead_code)]
pub type Property = fn(u32) -> Result<(), String>;

#[allow(dead_code)]
pub const ALL: [(&str, Property); 10] = [
    ("velocity clamp", velocity_clamp),
    ("rest fixpoint", rest_fixpoint),
    ("commutation", commutation),
    ("turn alternation", turn_alternation),
    ("rotation invariance", rotation_invariance),
    ("abstract-step monotonicity", monotonicity),
    ("abstract-step soundness", one_step_soundness),
    ("k-step soundness", k_step_soundness),
    ("box safety implies safety", box_safety_implies_safety),
    ("rest box fixpoint", rest_box_fixpoint),
];

fn run<S: Strategy>(cases: u32, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String> {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    let mut runner = TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

const TRANSFORMERS: [Transformer; 2] = [Transformer::Widening, Transformer::Trigonometric];

fn limits() -> AgentLimits {
    AgentLimits::default()
}

fn state(l: AgentLimits) -> impl Strategy<Value = AgentState> {
    (-100.0..100.0f64, -100.0..100.0f64, 0.0..=l.v_max, -2.0 * PI..2.0 * PI)
        .prop_map(|(x, y, v, t)| AgentState::new(x, y, v, t))
}

fn action(l: AgentLimits) -> impl Strategy<Value = Action> {
    (-l.phi_max..=l.phi_max, -l.a_max..=l.a_max).prop_map(|(phi, a)| Action::new(phi, a))
}

fn tau() -> impl Strategy<Value = f64> {
    0.001..=0.5f64
}

/// An interval inside `[lo, hi]` together with a point in it.
fn interval_with_point(lo: f64, hi: f64) -> impl Strategy<Value = (Interval, f64)> {
    (lo..=hi, lo..=hi, 0.0..=1.0f64).prop_map(|(a, b, s)| {
        let i = Interval::new(a.min(b), a.max(b));
        (i, (i.lo + s * (i.hi - i.lo)).clamp(i.lo, i.hi))
    })
}

fn agent_box_with_point(l: AgentLimits) -> impl Strategy<Value = (AgentBox, AgentState)> {
    (
        interval_with_point(-50.0, 50.0),
        interval_with_point(-50.0, 50.0),
        interval_with_point(0.0, l.v_max),
        interval_with_point(-2.0 * PI, 2.0 * PI),
    )
        .prop_map(|((x, px), (y, py), (v, pv), (t, pt))| {
            (AgentBox { x, y, v, theta: t }, AgentState::new(px, py, pv, pt))
        })
}

fn action_box_with_point(l: AgentLimits) -> impl Strategy<Value = (ActionBox, Action)> {
    (interval_with_point(-l.a_max, l.a_max), interval_with_point(-l.phi_max, l.phi_max))
        .prop_map(|((a, pa), (phi, pphi))| (ActionBox::new(a, phi), Action::new(pphi, pa)))
}

/// Widens `i` by nonnegative amounts, keeping it inside `[lo, hi]`.
fn grow(i: Interval, lo: f64, hi: f64, d: (f64, f64)) -> Interval {
    Interval::new((i.lo - d.0).max(lo).min(i.lo), (i.hi + d.1).min(hi).max(i.hi))
}

fn grow_pair() -> impl Strategy<Value = (f64, f64)> {
    (0.0..3.0f64, 0.0..3.0f64)
}

pub fn velocity_clamp(cases: u32) -> Result<(), String> {
    let l = limits();
    run(cases, (state(l), action(l), tau()), |(s, u, tau)| {
        let n = step_agent(&s, &u, &l, tau).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert!((0.0..=l.v_max).contains(&n.v), "v = {}", n.v);
        prop_assert!(n.is_finite());
        Ok(())
    })
}

pub fn rest_fixpoint(cases: u32) -> Result<(), String> {
    let l = limits();
    let input = (
        (-100.0..100.0f64, -100.0..100.0f64, -2.0 * PI..2.0 * PI),
        -l.phi_max..=l.phi_max,
        -l.a_max..=0.0f64,
        tau(),
    );
    run(cases, input, |((x, y, t), phi, a, tau)| {
        let s = AgentState::at_rest(x, y, t);
        let n = step_agent(&s, &Action::new(phi, a), &l, tau).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert_eq!(n, s);
        Ok(())
    })
}

pub fn commutation(cases: u32) -> Result<(), String> {
    let p = PhysicalParams::default();
    run(cases, (state(p.robot), state(p.human), action(p.robot), action(p.human)), |(r, h, ur, uh)| {
        let robot_first = {
            let x = JointState::new(r, h, Turn::RobotToAct);
            let x = step_joint(&x, &ur, &p).unwrap();
            step_joint(&x, &uh, &p).unwrap()
        };
        let human_first = {
            let x = JointState::new(r, h, Turn::HumanToAct);
            let x = step_joint(&x, &uh, &p).unwrap();
            step_joint(&x, &ur, &p).unwrap()
        };
        prop_assert_eq!(robot_first.to_vector(), human_first.to_vector());
        Ok(())
    })
}

pub fn turn_alternation(cases: u32) -> Result<(), String> {
    let p = PhysicalParams::default();
    run(cases, (state(p.robot), state(p.human), action(p.robot), any::<bool>()), |(r, h, u, robot)| {
        let turn = if robot { Turn::RobotToAct } else { Turn::HumanToAct };
        let n = step_joint(&JointState::new(r, h, turn), &u, &p).unwrap();
        prop_assert_eq!(n.turn, turn.flipped());
        prop_assert_ne!(n.turn, turn);
        Ok(())
    })
}

pub fn rotation_invariance(cases: u32) -> Result<(), String> {
    let p = PhysicalParams::default();
    let near = (-3.0..3.0f64, -3.0..3.0f64);
    let input = (state(p.robot), near, (-50.0..50.0f64, -50.0..50.0f64), -PI..PI);
    run(cases, input, |(r, (dx, dy), (cx, cy), angle)| {
        let h = AgentState::new(r.x + dx, r.y + dy, 0.0, 0.0);
        let d = dx.hypot(dy);
        prop_assume!((d - p.d_safe).abs() > 1e-9);
        let (s, c) = angle.sin_cos();
        let rot = |a: &AgentState| {
            let (x, y) = (a.x - cx, a.y - cy);
            AgentState::new(cx + c * x - s * y, cy + s * x + c * y, a.v, a.theta + angle)
        };
        let x = JointState::new(r, h, Turn::RobotToAct);
        let y = JointState::new(rot(&r), rot(&h), Turn::RobotToAct);
        prop_assert_eq!(
            is_safe(&x, &p, SafetyMode::CenterDistance),
            is_safe(&y, &p, SafetyMode::CenterDistance)
        );
        Ok(())
    })
}

fn nested_state_boxes(p: PhysicalParams) -> impl Strategy<Value = (StateBox, StateBox)> {
    let grow_agent = move |b: AgentBox, l: AgentLimits, g: [(f64, f64); 4]| AgentBox {
        x: grow(b.x, f64::MIN, f64::MAX, g[0]),
        y: grow(b.y, f64::MIN, f64::MAX, g[1]),
        v: grow(b.v, 0.0, l.v_max, g[2]),
        theta: grow(b.theta, f64::MIN, f64::MAX, g[3]),
    };
    (
        agent_box_with_point(p.robot),
        agent_box_with_point(p.human),
        [grow_pair(), grow_pair(), grow_pair(), grow_pair()],
        [grow_pair(), grow_pair(), grow_pair(), grow_pair()],
    )
        .prop_map(move |((r, _), (h, _), gr, gh)| {
            let inner = StateBox { robot: r, human: h };
            let outer = StateBox {
                robot: grow_agent(r, p.robot, gr),
                human: grow_agent(h, p.human, gh),
            };
            (inner, outer)
        })
}

fn nested_action_boxes(l: AgentLimits) -> impl Strategy<Value = (ActionBox, ActionBox)> {
    (action_box_with_point(l), grow_pair(), grow_pair()).prop_map(move |((b, _), ga, gp)| {
        let outer = ActionBox::new(grow(b.a, -l.a_max, l.a_max, ga), grow(b.phi, -l.phi_max, l.phi_max, gp));
        (b, outer)
    })
}

pub fn monotonicity(cases: u32) -> Result<(), String> {
    let p = PhysicalParams::default();
    let input = (nested_state_boxes(p), nested_action_boxes(p.robot), nested_action_boxes(p.human));
    run(cases, input, |((x, x_big), (ur, ur_big), (uh, uh_big))| {
        prop_assert!(x.is_subset_of(&x_big) && ur.is_subset_of(&ur_big) && uh.is_subset_of(&uh_big));
        for t in TRANSFORMERS {
            let small = abstract_step_with(t, &x, &ur, &uh, &p);
            let big = abstract_step_with(t, &x_big, &ur_big, &uh_big, &p);
            prop_assert!(small.is_subset_of(&big), "{:?}: {:?} not inside {:?}", t, small, big);
        }
        Ok(())
    })
}

fn boxes_with_points(
    p: PhysicalParams,
) -> impl Strategy<Value = ((AgentBox, AgentState), (AgentBox, AgentState), (ActionBox, Action), (ActionBox, Action))> {
    (
        agent_box_with_point(p.robot),
        agent_box_with_point(p.human),
        action_box_with_point(p.robot),
        action_box_with_point(p.human),
    )
}

pub fn one_step_soundness(cases: u32) -> Result<(), String> {
    let p = PhysicalParams::default();
    run(cases, boxes_with_points(p), |((rb, r), (hb, h), (urb, ur), (uhb, uh))| {
        let x = JointState::new(r, h, Turn::RobotToAct);
        let next = step_joint(&step_joint(&x, &ur, &p).unwrap(), &uh, &p).unwrap();
        let b = StateBox { robot: rb, human: hb };
        for t in TRANSFORMERS {
            prop_assert!(abstract_step_with(t, &b, &urb, &uhb, &p).contains(&next), "{:?}", t);
        }
        Ok(())
    })
}

pub fn k_step_soundness(cases: u32) -> Result<(), String> {
    let p = PhysicalParams::default();
    let input = (
        boxes_with_points(p),
        prop::collection::vec((action(p.robot), action(p.human)), 1..=30),
    );
    run(cases, input, |(((rb, r), (hb, h), (urb, _), (uhb, _)), raw)| {
        // Rescale each raw action into the boxes so every step is a sample.
        let into = |b: &ActionBox, u: &Action, l: &AgentLimits| {
            let f = |i: &Interval, v: f64, m: f64| (i.lo + (v + m) / (2.0 * m) * i.width()).clamp(i.lo, i.hi);
            Action::new(f(&b.phi, u.phi, l.phi_max), f(&b.a, u.a, l.a_max))
        };
        let mut x = JointState::new(r, h, Turn::RobotToAct);
        let mut bs = StateBox { robot: rb, human: hb };
        for t in TRANSFORMERS {
            for (ur, uh) in &raw {
                x = step_joint(&x, &into(&urb, ur, &p.robot), &p).unwrap();
                x = step_joint(&x, &into(&uhb, uh, &p.human), &p).unwrap();
                bs = abstract_step_with(t, &bs, &urb, &uhb, &p);
                prop_assert!(bs.contains(&x), "{:?}", t);
            }
            x = JointState::new(r, h, Turn::RobotToAct);
            bs = StateBox { robot: rb, human: hb };
        }
        Ok(())
    })
}

pub fn box_safety_implies_safety(cases: u32) -> Result<(), String> {
    let p = PhysicalParams::default();
    let near = |l: AgentLimits| {
        (
            interval_with_point(-4.0, 4.0),
            interval_with_point(-4.0, 4.0),
            interval_with_point(0.0, l.v_max),
            (-2.0 * PI..2.0 * PI, 0.0..1.0f64, 0.0..=1.0f64),
        )
            .prop_map(|((x, px), (y, py), (v, pv), (c, w, s))| {
                let theta = Interval::new(c, c + w);
                let pt = (c + s * w).clamp(theta.lo, theta.hi);
                (AgentBox { x, y, v, theta }, AgentState::new(px, py, pv, pt))
            })
    };
    run(cases, (near(p.robot), near(p.human)), |((rb, r), (hb, h))| {
        let b = StateBox { robot: rb, human: hb };
        if box_is_safe(&b, &p) {
            let x = JointState::new(r, h, Turn::RobotToAct);
            prop_assert!(is_safe(&x, &p, SafetyMode::RectangleOverlap));
            prop_assert!(is_safe(&x, &p, SafetyMode::CenterDistance));
        }
        Ok(())
    })
}

pub fn rest_box_fixpoint(cases: u32) -> Result<(), String> {
    let p = PhysicalParams::default();
    let braking = |l: AgentLimits| {
        (interval_with_point(-l.a_max, 0.0), interval_with_point(-l.phi_max, l.phi_max))
            .prop_map(|((a, _), (phi, _))| ActionBox::new(a, phi))
    };
    let input = (agent_box_with_point(p.robot), agent_box_with_point(p.human), braking(p.robot), braking(p.human));
    run(cases, input, |((mut rb, _), (mut hb, _), ur, uh)| {
        rb.v = Interval::point(0.0);
        hb.v = Interval::point(0.0);
        let b = StateBox { robot: rb, human: hb };
        for t in TRANSFORMERS {
            prop_assert_eq!(abstract_step_with(t, &b, &ur, &uh, &p), b);
        }
        Ok(())
    })
}
