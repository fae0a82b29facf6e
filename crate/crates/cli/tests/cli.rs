use std::process::{Command, Output};

fn shieldsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shieldsim")).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn run_writes_one_row_per_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    let o = shieldsim(&[
        "run", "--scenario", "cross", "--controller", "shield", "--human", "social", "--runs", "100", "--seed", "7",
        "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("seed,outcome,rounds,time_to_goal_s,shield_activations,stops_in_zone")
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 100);
    assert!(rows[0].starts_with("7,"));
    assert!(rows[99].starts_with("106,"));
    assert!(String::from_utf8_lossy(&o.stdout).contains("unsafe"));
}

#[test]
fn unknown_scenario_exits_2_naming_the_flag() {
    let o = shieldsim(&["run", "--scenario", "atlantis"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--scenario"), "{}", stderr(&o));
}

#[test]
fn invalid_flags_exit_nonzero() {
    for args in [
        &["run", "--controller", "reckless"][..],
        &["run", "--runs", "0"],
        &["verify", "--check", "everything"],
        &["run", "--bogus"],
    ] {
        assert_eq!(shieldsim(args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn verify_soundness_passes() {
    let o = shieldsim(&["verify", "--check", "soundness", "--samples", "100000"]);
    assert!(o.status.success());
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("100000 trials, 0 violations"), "{stdout}");
}

#[test]
fn verify_isrec_passes() {
    let o = shieldsim(&["verify", "--check", "isrec", "--samples", "50", "--rollouts", "10"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
}

#[test]
fn expect_safe_fails_on_unsafe_runs() {
    let o = shieldsim(&[
        "run", "--scenario", "cross", "--controller", "aggressive", "--human", "social", "--runs", "30",
        "--expect-safe",
    ]);
    let csv = String::from_utf8_lossy(&o.stdout);
    let unsafe_rows = csv.lines().filter(|l| l.contains(",unsafe,")).count();
    assert!(unsafe_rows > 0, "aggressive driving produced no collision");
    assert_eq!(o.status.code(), Some(1));

    let o = shieldsim(&["run", "--scenario", "merge", "--human", "compliant-goal", "--runs", "3", "--expect-safe"]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn csv_is_independent_of_parallelism() {
    let run = |threads: &str| {
        let o = shieldsim(&[
            "run", "--scenario", "merge", "--controller", "cem", "--runs", "6", "--seed", "3", "--parallelism", threads,
        ]);
        assert!(o.status.success());
        o.stdout
    };
    assert_eq!(run("1"), run("3"));
}

#[test]
fn trajectories_are_logged_per_run() {
    let dir = tempfile::tempdir().unwrap();
    let o = shieldsim(&[
        "run", "--scenario", "turn", "--runs", "2", "--seed", "4", "--log-trajectories", dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    for seed in [4, 5] {
        let text = std::fs::read_to_string(dir.path().join(format!("run_{seed}.jsonl"))).unwrap();
        let first = text.lines().next().unwrap();
        assert!(first.contains("\"round\":0") && first.contains("\"turn\":\"RobotToAct\""), "{first}");
    }
}

#[test]
fn scenario_print_round_trips_through_validate() {
    let dir = tempfile::tempdir().unwrap();
    let o = shieldsim(&["scenario", "print", "two_lanes"]);
    assert!(o.status.success());
    let good = dir.path().join("two_lanes.toml");
    std::fs::write(&good, &o.stdout).unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, String::from_utf8_lossy(&o.stdout).replace("init = [", "init = [1.0, ")).unwrap();

    let o = shieldsim(&["scenario", "validate", good.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let o = shieldsim(&["scenario", "validate", good.to_str().unwrap(), bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));

    let o = shieldsim(&["run", "--scenario", good.to_str().unwrap(), "--runs", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn scenario_list_names_all_builtins() {
    let o = shieldsim(&["scenario", "list"]);
    let names: Vec<String> = String::from_utf8_lossy(&o.stdout).lines().map(str::to_owned).collect();
    assert_eq!(names, ["merge", "cross", "turn", "two_lanes", "turn_no_stop"]);
}
