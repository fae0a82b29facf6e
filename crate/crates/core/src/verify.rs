//! Sampling checks of the reachability and shielding guarantees. Each check
//! returns a report counting trials and violations.

use std::f64::consts::PI;
use std::fmt;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    is_safe, step_agent, Action, AgentLimits, AgentState, JointState, PhysicalParams, SafetyMode, Turn,
};
use crate::harness::{run_batch, BackupKind, ConfigError, ControllerKind, HumanKind, Outcome, RunConfig};
use crate::reachability::{abstract_step_with, ActionBox, AgentBox, Interval, StateBox, Transformer};
use crate::rng::stream;
use crate::scenarios::{BuiltinName, Scenario};
use crate::shield::{is_recoverable, BackupSpec};

const SOUNDNESS_STREAM: u64 = 11;
const ISREC_STREAM: u64 = 12;

const TRANSFORMERS: [Transformer; 2] = [Transformer::Widening, Transformer::Trigonometric];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    Soundness,
    Isrec,
    /// Shielded episodes against compliant humans; named `theorem1` on the
    /// command line.
    #[serde(rename = "theorem1")]
    ShieldSafety,
}

impl Check {
    pub fn as_str(self) -> &'static str {
        match self {
            Check::Soundness => "soundness",
            Check::Isrec => "isrec",
            Check::ShieldSafety => "theorem1",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub check: Check,
    pub trials: usize,
    pub violations: usize,
    /// Description of the first violating trial, if any.
    pub first_violation: Option<String>,
}

impl VerifyReport {
    fn new(check: Check) -> Self {
        Self {
            check,
            trials: 0,
            violations: 0,
            first_violation: None,
        }
    }

    fn record(&mut self, ok: bool, describe: impl FnOnce() -> String) {
        self.trials += 1;
        if !ok {
            self.violations += 1;
            if self.first_violation.is_none() {
                self.first_violation = Some(describe());
            }
        }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {} trials, {} violations", self.check.as_str(), self.trials, self.violations)?;
        if let Some(v) = &self.first_violation {
            write!(f, " (first: {v})")?;
        }
        Ok(())
    }
}

fn interval_in(rng: &mut ChaCha8Rng, lo: f64, hi: f64, max_width: f64) -> Interval {
    let a = rng.random_range(lo..=hi);
    let w = rng.random_range(0.0..=max_width);
    Interval::new(a, (a + w).min(hi.max(a)))
}

fn sample_in(rng: &mut ChaCha8Rng, i: &Interval) -> f64 {
    if i.width() == 0.0 {
        i.lo
    } else {
        rng.random_range(i.lo..=i.hi)
    }
}

fn random_agent_box(rng: &mut ChaCha8Rng, limits: &AgentLimits) -> AgentBox {
    AgentBox {
        x: interval_in(rng, -50.0, 50.0, 5.0),
        y: interval_in(rng, -50.0, 50.0, 5.0),
        v: interval_in(rng, 0.0, limits.v_max, limits.v_max),
        theta: interval_in(rng, -2.0 * PI, 2.0 * PI, PI),
    }
}

fn random_action_box(rng: &mut ChaCha8Rng, limits: &AgentLimits) -> ActionBox {
    ActionBox::new(
        interval_in(rng, -limits.a_max, limits.a_max, limits.a_max),
        interval_in(rng, -limits.phi_max, limits.phi_max, limits.phi_max),
    )
}

fn sample_agent(rng: &mut ChaCha8Rng, b: &AgentBox) -> AgentState {
    AgentState::new(sample_in(rng, &b.x), sample_in(rng, &b.y), sample_in(rng, &b.v), sample_in(rng, &b.theta))
}

fn sample_action(rng: &mut ChaCha8Rng, b: &ActionBox) -> Action {
    Action::new(sample_in(rng, &b.phi), sample_in(rng, &b.a))
}

/// Containment of one concrete round (robot, then human) in the abstract
/// successor, for every transformer. A trial counts once per transformer.
pub fn soundness(samples: usize, seed: u64, p: &PhysicalParams) -> VerifyReport {
    let mut report = VerifyReport::new(Check::Soundness);
    let mut rng = stream(seed, SOUNDNESS_STREAM);
    let per_transformer = samples.div_ceil(TRANSFORMERS.len());
    for t in TRANSFORMERS {
        for _ in 0..per_transformer {
            let b = StateBox {
                robot: random_agent_box(&mut rng, &p.robot),
                human: random_agent_box(&mut rng, &p.human),
            };
            let u_r = random_action_box(&mut rng, &p.robot);
            let u_h = random_action_box(&mut rng, &p.human);
            let robot = sample_agent(&mut rng, &b.robot);
            let human = sample_agent(&mut rng, &b.human);
            let a_r = sample_action(&mut rng, &u_r);
            let a_h = sample_action(&mut rng, &u_h);
            let next = JointState::new(
                step_agent(&robot, &a_r, &p.robot, p.tau).expect("sampled action within limits"),
                step_agent(&human, &a_h, &p.human, p.tau).expect("sampled action within limits"),
                Turn::RobotToAct,
            );
            let out = abstract_step_with(t, &b, &u_r, &u_h, p);
            report.record(out.contains(&next), || {
                format!("{t:?}: box {b:?}, actions {u_r:?} {u_h:?}, successor {next:?}")
            });
        }
    }
    report
}

fn random_post_action_state(rng: &mut ChaCha8Rng, p: &PhysicalParams) -> JointState {
    let agent = |rng: &mut ChaCha8Rng, v_max: f64| {
        AgentState::new(
            rng.random_range(-20.0..=20.0),
            rng.random_range(-20.0..=20.0),
            rng.random_range(0.0..=v_max),
            rng.random_range(-PI..PI),
        )
    };
    JointState::new(agent(rng, p.robot.v_max), agent(rng, p.human.v_max), Turn::HumanToAct)
}

/// Concrete backup rollout from a post-action state with the human drawing
/// every action uniformly from `spec.human_backup_set`. Returns the first
/// failure, if any.
pub fn concrete_backup_rollout(
    x_prime: &JointState,
    spec: &BackupSpec,
    p: &PhysicalParams,
    rng: &mut ChaCha8Rng,
) -> Result<(), String> {
    let mut x = *x_prime;
    let both_safe = |x: &JointState| {
        is_safe(x, p, SafetyMode::RectangleOverlap) && is_safe(x, p, SafetyMode::CenterDistance)
    };
    for round in 0..spec.horizon_k {
        let u_h = sample_action(rng, &spec.human_backup_set);
        x.human = step_agent(&x.human, &u_h, &p.human, p.tau).map_err(|e| e.to_string())?;
        if !both_safe(&x) {
            return Err(format!("unsafe after human move in round {round}"));
        }
        let u_r = spec.robot_backup.action(&x.robot, p);
        x.robot = step_agent(&x.robot, &u_r, &p.robot, p.tau).map_err(|e| e.to_string())?;
        if !both_safe(&x) {
            return Err(format!("unsafe after robot move in round {round}"));
        }
    }
    if x.robot.v != 0.0 || x.human.v != 0.0 {
        return Err(format!("not at rest after {} rounds: v_R={}, v_H={}", spec.horizon_k, x.robot.v, x.human.v));
    }
    Ok(())
}

/// Draws random post-action states until `states` of them are recoverable,
/// then simulates `rollouts` concrete backup rollouts from each. States are
/// split evenly between the transformers.
pub fn isrec(states: usize, rollouts: usize, seed: u64, spec: &BackupSpec, p: &PhysicalParams) -> VerifyReport {
    let mut report = VerifyReport::new(Check::Isrec);
    let mut rng = stream(seed, ISREC_STREAM);
    let per_transformer = states.div_ceil(TRANSFORMERS.len());
    for t in TRANSFORMERS {
        let spec = BackupSpec {
            transformer: t,
            ..spec.clone()
        };
        let mut found = 0;
        while found < per_transformer {
            let x = random_post_action_state(&mut rng, p);
            if !is_recoverable(&x, &spec, p) {
                continue;
            }
            found += 1;
            for _ in 0..rollouts {
                let result = concrete_backup_rollout(&x, &spec, p, &mut rng);
                report.record(result.is_ok(), || format!("{t:?}: from {x:?}: {}", result.unwrap_err()));
            }
        }
    }
    report
}

/// The scenario and backup pairs exercised end to end.
pub fn shield_safety_cells() -> Vec<(BuiltinName, BackupKind)> {
    let mut cells: Vec<_> = BuiltinName::ALL.iter().map(|&n| (n, BackupKind::Brake)).collect();
    cells.push((BuiltinName::TwoLanes, BackupKind::PullOver));
    cells.push((BuiltinName::TurnNoStop, BackupKind::NoStop));
    cells
}

/// Shielded episodes against compliant humans: no run may end unsafe. Each
/// run is one trial.
pub fn shield_safety(runs_per_cell: usize, seed: u64, transformer: Transformer) -> Result<VerifyReport, ConfigError> {
    let mut report = VerifyReport::new(Check::ShieldSafety);
    for (name, backup) in shield_safety_cells() {
        for human in [HumanKind::CompliantRandom, HumanKind::CompliantGoal] {
            let mut cfg = RunConfig::new(Scenario::builtin(name), ControllerKind::Shield, human);
            cfg.backup = backup;
            cfg.seed = seed;
            cfg.run_count = runs_per_cell;
            cfg.transformer = transformer;
            for r in run_batch(&cfg, 0)? {
                report.record(r.outcome != Outcome::Unsafe, || {
                    format!("{} / {backup:?} / {human:?}: seed {} unsafe", name.as_str(), r.seed)
                });
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn soundness_small_batch_passes() {
        let r = soundness(2000, 1, &PhysicalParams::default());
        assert_eq!(r.trials, 2000);
        assert!(r.passed(), "{r}");
    }

    #[test]
    fn isrec_small_batch_passes() {
        let r = isrec(10, 5, 2, &BackupSpec::default(), &PhysicalParams::default());
        assert_eq!(r.trials, 50);
        assert!(r.passed(), "{r}");
    }

    #[test]
    fn rollout_from_collision_course_is_reported() {
        let p = PhysicalParams::default();
        let x = JointState::new(
            AgentState::new(0.0, 0.0, 5.0, 0.0),
            AgentState::new(3.0, 0.0, 0.0, PI),
            Turn::HumanToAct,
        );
        let mut rng = stream(0, ISREC_STREAM);
        assert!(concrete_backup_rollout(&x, &BackupSpec::default(), &p, &mut rng).is_err());
    }

    #[test]
    fn report_counts_first_violation_only() {
        let mut r = VerifyReport::new(Check::Soundness);
        r.record(true, || unreachable!());
        r.record(false, || "a".into());
        r.record(false, || "b".into());
        assert_eq!((r.trials, r.violations), (3, 2));
        assert_eq!(r.first_violation.as_deref(), Some("a"));
        assert!(!r.passed());
    }
}
