//! The five driving tasks and the scenario file format.
//!
//! All builtins share one frame: x east, y north, metres, conflict point at
//! the origin, right-hand traffic on 4 m lanes, a 90 m × 90 m canvas.
//! Builtin coordinates are quantized to six decimals so that saving and
//! loading a builtin is exact. The file grammar is documented in
//! `docs/scenario-format.md`.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_6};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controllers::SubgoalChain;
use crate::dynamics::{is_safe, AgentLimits, AgentState, JointState, PhysicalParams, SafetyMode, Turn};
use crate::geometry::{Aabb, Vec2};

pub const DEFAULT_EPISODE_CAP: usize = 600;
pub const LANE_WIDTH: f64 = 4.0;
/// Distance of the robot's start from the conflict point.
pub const ROBOT_START: f64 = 40.0;
/// Half the side of the square canvas.
pub const HALF_CANVAS: f64 = 45.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Goal {
    pub center: Vec2,
    pub radius: f64,
}

impl Goal {
    pub fn reached(&self, pos: Vec2) -> bool {
        (pos - self.center).norm() <= self.radius
    }
}

/// A straight lane segment, described by its centreline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lane {
    pub start: Vec2,
    pub end: Vec2,
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub physical: PhysicalParams,
    pub episode_cap: usize,
    pub robot_init: AgentState,
    pub human_init: AgentState,
    pub robot_goal: Goal,
    pub human_goal: Goal,
    pub robot_subgoals: SubgoalChain,
    pub human_subgoals: SubgoalChain,
    /// Lateral position of the lane the pull-over backup steers into.
    pub pull_over_lane_y: Option<f64>,
    pub walls: Vec<Vec<Vec2>>,
    pub lanes: Vec<Lane>,
    pub no_stop_zones: Vec<Aabb>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BuiltinName {
    Merge,
    Cross,
    Turn,
    TwoLanes,
    TurnNoStop,
}

impl BuiltinName {
    pub const ALL: [BuiltinName; 5] = [
        BuiltinName::Merge,
        BuiltinName::Cross,
        BuiltinName::Turn,
        BuiltinName::TwoLanes,
        BuiltinName::TurnNoStop,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BuiltinName::Merge => "merge",
            BuiltinName::Cross => "cross",
            BuiltinName::Turn => "turn",
            BuiltinName::TwoLanes => "two_lanes",
            BuiltinName::TurnNoStop => "turn_no_stop",
        }
    }
}

impl std::str::FromStr for BuiltinName {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BuiltinName::ALL
            .into_iter()
            .find(|b| b.as_str() == s)
            .ok_or_else(|| ScenarioError::UnknownBuiltin(s.to_string()))
    }
}

impl std::fmt::Display for BuiltinName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("unknown builtin scenario `{0}` (expected one of merge, cross, turn, two_lanes, turn_no_stop)")]
    UnknownBuiltin(String),
    #[error("{0}")]
    Parse(String),
    #[error("invariant `{invariant}` violated: {detail}")]
    Invariant { invariant: &'static str, detail: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn violated(invariant: &'static str, detail: impl Into<String>) -> ScenarioError {
    ScenarioError::Invariant {
        invariant,
        detail: detail.into(),
    }
}

/// Rounds to the six decimals used on disk.
pub fn quantize(v: f64) -> f64 {
    format!("{v:.6}").parse().expect("formatted float parses")
}

fn qv(x: f64, y: f64) -> Vec2 {
    Vec2::new(quantize(x), quantize(y))
}

impl Scenario {
    pub fn initial_state(&self) -> JointState {
        JointState::new(self.robot_init, self.human_init, Turn::RobotToAct)
    }

    /// Checks every scenario invariant, naming the first one that fails.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.physical.check().map_err(|e| violated("physical-params", e))?;
        if self.episode_cap == 0 {
            return Err(violated("episode-cap", "episode_cap must be at least 1"));
        }
        for (who, s) in [("robot", &self.robot_init), ("human", &self.human_init)] {
            if !s.is_finite() {
                return Err(violated("finite-state", format!("{who} initial state is not finite")));
            }
            if s.v != 0.0 {
                return Err(violated(
                    "initial-rest",
                    format!("{who} initial speed is {} but initial states must be at rest", s.v),
                ));
            }
        }
        if !is_safe(&self.initial_state(), &self.physical, SafetyMode::RectangleOverlap) {
            return Err(violated("initial-rest", "initial bodies overlap, so the start is not a safe equilibrium"));
        }
        for (who, chain) in [("robot", &self.robot_subgoals), ("human", &self.human_subgoals)] {
            chain
                .validate()
                .map_err(|e| violated("subgoal-chain", format!("{who}: {e}")))?;
        }
        let reach = self.episode_cap as f64 * self.physical.tau;
        for (who, init, goal, limits) in [
            ("robot", &self.robot_init, &self.robot_goal, &self.physical.robot),
            ("human", &self.human_init, &self.human_goal, &self.physical.human),
        ] {
            if !(goal.radius > 0.0) {
                return Err(violated("goal-radius", format!("{who} goal radius must be positive")));
            }
            let needed = (goal.center - init.position()).norm() - goal.radius;
            let max = reach * limits.v_max;
            if needed > max {
                return Err(violated(
                    "goal-reachable",
                    format!("{who} goal is {needed:.3} m away but at most {max:.3} m can be covered in {} rounds", self.episode_cap),
                ));
            }
        }
        if !self.robot_goal.reached(self.robot_subgoals.goal()) {
            return Err(violated("goal-reachable", "robot subgoal chain must end inside the robot goal"));
        }
        for w in &self.walls {
            if w.len() < 2 {
                return Err(violated("geometry", "walls need at least two points"));
            }
        }
        for l in &self.lanes {
            if !(l.width > 0.0) || l.start == l.end {
                return Err(violated("geometry", "lanes need positive width and distinct endpoints"));
            }
        }
        for z in &self.no_stop_zones {
            if !(z.x_min < z.x_max && z.y_min < z.y_max) {
                return Err(violated("geometry", "no-stop zones need min < max on both axes"));
            }
        }
        Ok(())
    }

    pub fn builtin(name: BuiltinName) -> Scenario {
        let s = match name {
            BuiltinName::Merge => merge(),
            BuiltinName::Cross => cross(),
            BuiltinName::Turn => turn("turn", vec![]),
            BuiltinName::TwoLanes => two_lanes(),
            BuiltinName::TurnNoStop => turn("turn_no_stop", vec![Aabb::new(-4.0, -4.0, 4.0, 4.0)]),
        };
        debug_assert!(s.validate().is_ok(), "builtin {} invalid", s.name);
        s
    }

    pub fn builtin_by_name(name: &str) -> Result<Scenario, ScenarioError> {
        Ok(Self::builtin(name.parse()?))
    }

    /// Renders the scenario in the on-disk format.
    pub fn to_text(&self) -> String {
        let n = |v: f64| format!("{v:.6}");
        let pt = |p: &Vec2| format!("[{}, {}]", n(p.x), n(p.y));
        let mut out = String::new();
        let _ = writeln!(out, "# shieldsim scenario, units: m, s, rad");
        let _ = writeln!(out, "name = {:?}", self.name);
        let _ = writeln!(out);
        let _ = writeln!(out, "[physical]");
        let _ = writeln!(out, "tau = {}", n(self.physical.tau));
        let _ = writeln!(out, "d_safe = {}", n(self.physical.d_safe));
        let _ = writeln!(out, "episode_cap = {}", self.episode_cap);
        for (section, init, goal, chain, limits) in [
            ("robot", &self.robot_init, &self.robot_goal, &self.robot_subgoals, &self.physical.robot),
            ("human", &self.human_init, &self.human_goal, &self.human_subgoals, &self.physical.human),
        ] {
            let _ = writeln!(out);
            let _ = writeln!(out, "[{section}]");
            let _ = writeln!(out, "# x, y, v, theta");
            let _ = writeln!(out, "init = [{}, {}, {}, {}]", n(init.x), n(init.y), n(init.v), n(init.theta));
            let _ = writeln!(out, "# x, y, radius");
            let _ = writeln!(out, "goal = [{}, {}, {}]", n(goal.center.x), n(goal.center.y), n(goal.radius));
            let wps: Vec<String> = chain.waypoints.iter().map(pt).collect();
            let _ = writeln!(out, "subgoals = [{}]", wps.join(", "));
            let _ = writeln!(out, "arrival_radius = {}", n(chain.arrival_radius));
            let _ = writeln!(out, "a_max = {}", n(limits.a_max));
            let _ = writeln!(out, "phi_max = {}", n(limits.phi_max));
            let _ = writeln!(out, "v_max = {}", n(limits.v_max));
            let _ = writeln!(out, "length = {}", n(limits.length));
            let _ = writeln!(out, "width = {}", n(limits.width));
            if section == "robot" {
                if let Some(y) = self.pull_over_lane_y {
                    let _ = writeln!(out, "pull_over_lane_y = {}", n(y));
                }
            }
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "[geometry]");
        let _ = writeln!(out, "# each wall is a polyline of [x, y] points");
        let _ = writeln!(out, "walls = [");
        for w in &self.walls {
            let pts: Vec<String> = w.iter().map(pt).collect();
            let _ = writeln!(out, "  [{}],", pts.join(", "));
        }
        let _ = writeln!(out, "]");
        let _ = writeln!(out, "# x0, y0, x1, y1, width (centreline)");
        let _ = writeln!(out, "lanes = [");
        for l in &self.lanes {
            let _ = writeln!(out, "  [{}, {}, {}, {}, {}],", n(l.start.x), n(l.start.y), n(l.end.x), n(l.end.y), n(l.width));
        }
        let _ = writeln!(out, "]");
        let _ = writeln!(out);
        let _ = writeln!(out, "[zones]");
        let _ = writeln!(out, "# x_min, y_min, x_max, y_max");
        let _ = writeln!(out, "no_stop = [");
        for z in &self.no_stop_zones {
            let _ = writeln!(out, "  [{}, {}, {}, {}],", n(z.x_min), n(z.y_min), n(z.x_max), n(z.y_max));
        }
        let _ = writeln!(out, "]");
        out
    }

    /// Parses and validates a scenario file.
    pub fn from_text(text: &str) -> Result<Scenario, ScenarioError> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        if file.human.pull_over_lane_y.is_some() {
            return Err(ScenarioError::Parse("pull_over_lane_y is only allowed under [robot]".into()));
        }
        let s = file.into_scenario();
        s.validate()?;
        Ok(s)
    }

    pub fn save(&self, path: &Path) -> Result<(), ScenarioError> {
        std::fs::write(path, self.to_text()).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Scenario, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_text(&text)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    name: String,
    physical: PhysicalSection,
    robot: AgentSection,
    human: AgentSection,
    geometry: GeometrySection,
    zones: ZonesSection,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PhysicalSection {
    tau: f64,
    d_safe: f64,
    episode_cap: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AgentSection {
    init: [f64; 4],
    goal: [f64; 3],
    subgoals: Vec<[f64; 2]>,
    arrival_radius: f64,
    a_max: f64,
    phi_max: f64,
    v_max: f64,
    length: f64,
    width: f64,
    #[serde(default)]
    pull_over_lane_y: Option<f64>,
}

impl AgentSection {
    fn limits(&self) -> AgentLimits {
        AgentLimits {
            a_max: self.a_max,
            phi_max: self.phi_max,
            v_max: self.v_max,
            length: self.length,
            width: self.width,
        }
    }

    fn init(&self) -> AgentState {
        let [x, y, v, theta] = self.init;
        AgentState::new(x, y, v, theta)
    }

    fn goal(&self) -> Goal {
        let [x, y, radius] = self.goal;
        Goal {
            center: Vec2::new(x, y),
            radius,
        }
    }

    fn chain(&self) -> SubgoalChain {
        SubgoalChain {
            waypoints: self.subgoals.iter().map(|&[x, y]| Vec2::new(x, y)).collect(),
            arrival_radius: self.arrival_radius,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GeometrySection {
    #[serde(default)]
    walls: Vec<Vec<[f64; 2]>>,
    #[serde(default)]
    lanes: Vec<[f64; 5]>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ZonesSection {
    #[serde(default)]
    no_stop: Vec<[f64; 4]>,
}

impl ScenarioFile {
    fn into_scenario(self) -> Scenario {
        Scenario {
            name: self.name,
            physical: PhysicalParams {
                tau: self.physical.tau,
                d_safe: self.physical.d_safe,
                robot: self.robot.limits(),
                human: self.human.limits(),
            },
            episode_cap: self.physical.episode_cap,
            robot_init: self.robot.init(),
            human_init: self.human.init(),
            robot_goal: self.robot.goal(),
            human_goal: self.human.goal(),
            robot_subgoals: self.robot.chain(),
            human_subgoals: self.human.chain(),
            pull_over_lane_y: self.robot.pull_over_lane_y,
            walls: self
                .geometry
                .walls
                .into_iter()
                .map(|w| w.into_iter().map(|[x, y]| Vec2::new(x, y)).collect())
                .collect(),
            lanes: self
                .geometry
                .lanes
                .into_iter()
                .map(|[x0, y0, x1, y1, width]| Lane {
                    start: Vec2::new(x0, y0),
                    end: Vec2::new(x1, y1),
                    width,
                })
                .collect(),
            no_stop_zones: self
                .zones
                .no_stop
                .into_iter()
                .map(|[a, b, c, d]| Aabb::new(a, b, c, d))
                .collect(),
        }
    }
}

fn quantized_physical() -> PhysicalParams {
    let q = |l: AgentLimits| AgentLimits {
        a_max: quantize(l.a_max),
        phi_max: quantize(l.phi_max),
        v_max: quantize(l.v_max),
        length: quantize(l.length),
        width: quantize(l.width),
    };
    let p = PhysicalParams::default();
    PhysicalParams {
        tau: quantize(p.tau),
        d_safe: quantize(p.d_safe),
        robot: q(p.robot),
        human: q(p.human),
    }
}

fn rest(x: f64, y: f64, theta: f64) -> AgentState {
    AgentState::at_rest(quantize(x), quantize(y), quantize(theta))
}

fn chain(points: &[(f64, f64)], arrival_radius: f64) -> SubgoalChain {
    SubgoalChain {
        waypoints: points.iter().map(|&(x, y)| qv(x, y)).collect(),
        arrival_radius,
    }
}

fn goal(x: f64, y: f64) -> Goal {
    Goal {
        center: qv(x, y),
        radius: 2.0,
    }
}

fn polyline(points: &[(f64, f64)]) -> Vec<Vec2> {
    points.iter().map(|&(x, y)| qv(x, y)).collect()
}

fn lane(x0: f64, y0: f64, x1: f64, y1: f64) -> Lane {
    Lane {
        start: qv(x0, y0),
        end: qv(x1, y1),
        width: LANE_WIDTH,
    }
}

fn base(name: &str) -> Scenario {
    Scenario {
        name: name.to_string(),
        physical: quantized_physical(),
        episode_cap: DEFAULT_EPISODE_CAP,
        robot_init: AgentState::at_rest(0.0, 0.0, 0.0),
        human_init: AgentState::at_rest(0.0, 0.0, 0.0),
        robot_goal: goal(0.0, 0.0),
        human_goal: goal(0.0, 0.0),
        robot_subgoals: chain(&[(0.0, 0.0)], 2.0),
        human_subgoals: chain(&[(0.0, 0.0)], 2.0),
        pull_over_lane_y: None,
        walls: vec![],
        lanes: vec![],
        no_stop_zones: vec![],
    }
}

/// Point on the merge ramp, `dist` metres before the junction at the
/// origin and `side` metres to the left of its centreline.
fn ramp_point(dist: f64, side: f64) -> (f64, f64) {
    let (c, s) = (FRAC_PI_6.cos(), FRAC_PI_6.sin());
    (-dist * c - side * s, -dist * s + side * c)
}

/// Where the ramp edge `side` metres left of the centreline meets y = -2.
fn ramp_edge_on_main_road(side: f64) -> (f64, f64) {
    let (c, s) = (FRAC_PI_6.cos(), FRAC_PI_6.sin());
    let h = 0.5 * LANE_WIDTH;
    let t = (-h - side * c) / s;
    (-side * s + t * c, -h)
}

/// Eastbound main road along y = 0 joined by a ramp from the south-west.
fn merge() -> Scenario {
    let h = 0.5 * LANE_WIDTH;
    let (hx, hy) = ramp_point(26.0, 0.0);
    Scenario {
        robot_init: rest(-ROBOT_START, 0.0, 0.0),
        human_init: rest(hx, hy, FRAC_PI_6),
        robot_goal: goal(28.0, 0.0),
        human_goal: goal(32.0, 0.0),
        robot_subgoals: chain(&[(28.0, 0.0)], 2.0),
        human_subgoals: chain(&[(0.0, 0.0), (32.0, 0.0)], 2.0),
        walls: vec![
            polyline(&[(-HALF_CANVAS, h), (HALF_CANVAS, h)]),
            polyline(&[(-HALF_CANVAS, -h), ramp_edge_on_main_road(h), ramp_point(HALF_CANVAS, h)]),
            polyline(&[ramp_point(HALF_CANVAS, -h), ramp_edge_on_main_road(-h), (HALF_CANVAS, -h)]),
        ],
        lanes: vec![lane(-HALF_CANVAS, 0.0, HALF_CANVAS, 0.0), {
            let (x0, y0) = ramp_point(HALF_CANVAS, 0.0);
            lane(x0, y0, 0.0, 0.0)
        }],
        ..base("merge")
    }
}

/// Four corner walls of a plus-shaped intersection of two 8 m roads.
fn intersection_walls() -> Vec<Vec<Vec2>> {
    let e = LANE_WIDTH;
    let far = HALF_CANVAS;
    vec![
        polyline(&[(e, far), (e, e), (far, e)]),
        polyline(&[(-e, far), (-e, e), (-far, e)]),
        polyline(&[(-e, -far), (-e, -e), (-far, -e)]),
        polyline(&[(e, -far), (e, -e), (far, -e)]),
    ]
}

fn intersection_lanes() -> Vec<Lane> {
    let h = 0.5 * LANE_WIDTH;
    vec![
        lane(-HALF_CANVAS, -h, HALF_CANVAS, -h),
        lane(HALF_CANVAS, h, -HALF_CANVAS, h),
        lane(h, -HALF_CANVAS, h, HALF_CANVAS),
        lane(-h, HALF_CANVAS, -h, -HALF_CANVAS),
    ]
}

/// Robot eastbound, human northbound; their lanes cross at (2, -2).
fn cross() -> Scenario {
    let h = 0.5 * LANE_WIDTH;
    Scenario {
        robot_init: rest(-ROBOT_START, -h, 0.0),
        human_init: rest(h, -22.0, FRAC_PI_2),
        robot_goal: goal(28.0, -h),
        human_goal: goal(h, 28.0),
        robot_subgoals: chain(&[(28.0, -h)], 2.0),
        human_subgoals: chain(&[(h, 28.0)], 2.0),
        walls: intersection_walls(),
        lanes: intersection_lanes(),
        ..base("cross")
    }
}

/// Robot northbound turning left to westbound; the human drives straight
/// southbound through the robot's turning path.
fn turn(name: &str, zones: Vec<Aabb>) -> Scenario {
    let h = 0.5 * LANE_WIDTH;
    Scenario {
        robot_init: rest(h, -ROBOT_START, FRAC_PI_2),
        human_init: rest(-h, 21.0, -FRAC_PI_2),
        robot_goal: goal(-28.0, h),
        human_goal: goal(-h, -28.0),
        robot_subgoals: chain(&[(h, -h), (1.46, 0.0), (0.0, 1.46), (-28.0, h)], 3.0),
        human_subgoals: chain(&[(-h, -28.0)], 2.0),
        walls: intersection_walls(),
        lanes: intersection_lanes(),
        no_stop_zones: zones,
        ..base(name)
    }
}

/// Two eastbound highway lanes (y = 2 and the outer lane y = -2) with an
/// on-ramp joining the y = 2 lane from the north-west. The robot can pull
/// over into the outer lane.
fn two_lanes() -> Scenario {
    let top = 2.0 + 0.5 * LANE_WIDTH;
    let bottom = -2.0 - 0.5 * LANE_WIDTH;
    let (c, s) = (FRAC_PI_6.cos(), FRAC_PI_6.sin());
    let on_ramp = |d: f64| (-d * c, 2.0 + d * s);
    let (hx, hy) = on_ramp(25.0);
    Scenario {
        robot_init: rest(-ROBOT_START, 2.0, 0.0),
        human_init: rest(hx, hy, -FRAC_PI_6),
        // Spans both lanes so a robot passing on the shoulder also arrives.
        robot_goal: Goal {
            center: qv(28.0, 0.0),
            radius: 3.0,
        },
        human_goal: goal(34.0, 2.0),
        robot_subgoals: chain(&[(28.0, 2.0)], 2.0),
        human_subgoals: chain(&[(0.0, 2.0), (34.0, 2.0)], 2.0),
        pull_over_lane_y: Some(-2.0),
        walls: vec![
            polyline(&[(-HALF_CANVAS, bottom), (HALF_CANVAS, bottom)]),
            polyline(&[(-HALF_CANVAS, top), (-8.0, top)]),
            polyline(&[(8.0, top), (HALF_CANVAS, top)]),
        ],
        lanes: vec![lane(-HALF_CANVAS, 2.0, HALF_CANVAS, 2.0), lane(-HALF_CANVAS, -2.0, HALF_CANVAS, -2.0), {
            let (x0, y0) = on_ramp(HALF_CANVAS);
            lane(x0, y0, 0.0, 2.0)
        }],
        ..base("two_lanes")
    }
}
