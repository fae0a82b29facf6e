use shieldsim_core::harness::{run_batch, summarize, ControllerKind, HumanKind, Outcome, RunConfig};
use shieldsim_core::scenarios::{BuiltinName, Scenario};

fn batch(name: BuiltinName, controller: ControllerKind, human: HumanKind, runs: usize) -> Vec<Outcome> {
    let mut cfg = RunConfig::new(Scenario::builtin(name), controller, human);
    cfg.run_count = runs;
    run_batch(&cfg, 0).unwrap().into_iter().map(|r| r.outcome).collect()
}

#[test]
fn aggressive_collides_with_social_human_on_cross() {
    // Seeds 0..100 give 25 collisions; the bound leaves room for small model changes.
    let outcomes = batch(BuiltinName::Cross, ControllerKind::Aggressive, HumanKind::SocialForce, 100);
    let unsafe_runs = outcomes.iter().filter(|o| **o == Outcome::Unsafe).count();
    assert!(unsafe_runs >= 15, "{unsafe_runs} unsafe runs");
}

#[test]
fn shield_is_safe_against_compliant_humans_on_every_builtin() {
    for name in BuiltinName::ALL {
        for human in [HumanKind::CompliantRandom, HumanKind::CompliantGoal] {
            let outcomes = batch(name, ControllerKind::Shield, human, 10);
            assert!(!outcomes.contains(&Outcome::Unsafe), "{name} {human:?}");
        }
    }
}

#[test]
fn shield_reaches_goal_against_social_human_on_merge() {
    let mut cfg = RunConfig::new(Scenario::builtin(BuiltinName::Merge), ControllerKind::Shield, HumanKind::SocialForce);
    cfg.run_count = 20;
    let summary = summarize(&run_batch(&cfg, 0).unwrap());
    assert_eq!(summary.unsafe_runs, 0);
    assert_eq!(summary.reached_goal, 20);
}

#[test]
fn scenario_file_runs_like_its_builtin() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("turn.toml");
    Scenario::builtin(BuiltinName::Turn).save(&path).unwrap();
    let from_file = Scenario::load(&path).unwrap();
    let mut a = RunConfig::new(from_file, ControllerKind::Shield, HumanKind::SocialForce);
    a.run_count = 3;
    let mut b = RunConfig::new(Scenario::builtin(BuiltinName::Turn), ControllerKind::Shield, HumanKind::SocialForce);
    b.run_count = 3;
    assert_eq!(run_batch(&a, 1).unwrap(), run_batch(&b, 1).unwrap());
}
