use std::path::PathBuf;
use std::process::{Command, Output};

fn scratch_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("acceptable-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str], out: &PathBuf) -> Output {
    Command::new(env!("CARGO_BIN_EXE_acceptable"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn read_json(path: PathBuf) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn malformed_file_exits_2_with_location() {
    let dir = scratch_dir("malformed");
    let path = dir.join("bad.json");
    std::fs::write(
        &path,
        r#"{
  "players": 1,
  "states": ["a"],
  "actions": [["x"]],
  "payoffs": {"a": {"x": [0.0]}},
  "transitions": {"a": {"x": {"b": 1.0}}}
}"#,
    )
    .unwrap();
    let out = run(&["validate", "--game", path.to_str().unwrap()], &dir);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("transitions.a.x"), "{err}");

    std::fs::write(&path, "{\"players\": 2,").unwrap();
    let out = run(&["validate", "--game", path.to_str().unwrap()], &dir);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line"));
}

#[test]
fn missing_file_and_bad_config_exit_2() {
    let dir = scratch_dir("missing");
    let out = run(&["solve", "--game", "no/such/file.json"], &dir);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["solve", "--game", "sorin", "--epsilon", "0"], &dir);
    assert_eq!(out.status.code(), Some(2));
    let out = run(
        &["solve", "--game", "sorin", "--lambda-grid", "0.99,0.9"],
        &dir,
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bundled_games_validate() {
    let dir = scratch_dir("bundled");
    for name in acceptable::corpus::names() {
        let out = run(&["validate", "--game", name], &dir);
        assert_eq!(out.status.code(), Some(0), "{name}");
    }
}

#[test]
fn solve_sorin_values() {
    let dir = scratch_dir("solve");
    let out = run(&["solve", "--game", "sorin"], &dir);
    assert_eq!(out.status.code(), Some(0));
    let json = read_json(dir.join("solve.json"));
    let v = &json["v1"][0];
    assert!((v[0].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-3);
    assert!((v[1].as_f64().unwrap() - 0.5).abs() < 1e-3);
}

#[test]
fn build_and_verify_mdp_pass() {
    let dir = scratch_dir("mdp");
    let out = run(&["build", "--game", "mdp3"], &dir);
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.join("build.json").exists());
    let out = run(&["verify", "--game", "mdp3"], &dir);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    assert_eq!(read_json(dir.join("verify.json"))["pass"], true);
}

#[test]
fn correlated_verify_and_simulate_pass_on_sorin() {
    let dir = scratch_dir("sorin-corr");
    let out = run(&["verify", "--game", "sorin", "--correlated"], &dir);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    let out = run(
        &["simulate", "--game", "sorin", "--replications", "400"],
        &dir,
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
}

#[test]
fn artifacts_are_byte_identical_across_runs() {
    let a = scratch_dir("det-a");
    let b = scratch_dir("det-b");
    for cmd in ["decompose", "build", "build-correlated", "verify"] {
        for dir in [&a, &b] {
            let out = run(&[cmd, "--game", "quitting", "--seed", "7"], dir);
            assert_eq!(out.status.code(), Some(0), "{cmd}");
        }
        let file = format!("{cmd}.json");
        let x = std::fs::read(a.join(&file)).unwrap();
        let y = std::fs::read(b.join(&file)).unwrap();
        assert!(x == y, "{file} differs");
    }
}

#[test]
fn demo_sorin_reports_both_verdicts() {
    let dir = scratch_dir("demo");
    let out = run(&["demo-sorin"], &dir);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("acceptable: PASS"), "{text}");
    assert!(text.contains("limit payoff 0.3333"), "{text}");
    let json = read_json(dir.join("demo-sorin.json"));
    assert_eq!(json["fixed_discount"]["pass"], false);
}
