use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
name = "tiny"

[domain]
kind = "disc"
radius = 1.0

[region]
kind = "disc"
radius = 0.25

[grid]
h = 0.03125

[flow]
horizon = 0.05
outputs = 2

[checks.extinction]
expected = EXPECTED
"#;

fn fbflow(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fbflow")).args(args).env("FBFLOW_OUT", out).output().unwrap()
}

fn scenario(dir: &Path, expected: f64) -> String {
    let p = dir.join("tiny.cfg");
    std::fs::write(&p, TINY.replace("EXPECTED", &expected.to_string())).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn passing_run_exits_zero_and_writes_under_fbflow_out() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario(dir.path(), 0.03125);
    let o = fbflow(&["run", &cfg], &dir.path().join("out"));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(o.status.code(), Some(0), "{stdout}");
    assert!(stdout.contains("[PASS] tiny/extinction-time"));
    let runs: Vec<_> = std::fs::read_dir(dir.path().join("out").join("tiny")).unwrap().collect();
    assert_eq!(runs.len(), 1);
}

#[test]
fn failing_check_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario(dir.path(), 1.0);
    let o = fbflow(&["run", &cfg, "--out", &dir.path().join("flag").to_string_lossy()], &dir.path().join("env"));
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).contains("[FAIL] tiny/extinction-time"));
    // The flag takes precedence over the environment.
    assert!(dir.path().join("flag").join("tiny").exists());
    assert!(!dir.path().join("env").exists());
}

#[test]
fn errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let bad = dir.path().join("bad.cfg");
    std::fs::write(&bad, TINY.replace("EXPECTED", "0.03").replace("h = 0.03125", "h = 0.0")).unwrap();
    let o = fbflow(&["run", &bad.to_string_lossy()], &out);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("grid.h"));
    assert_eq!(fbflow(&["run", "no-such-scenario"], &out).status.code(), Some(2));
    assert_eq!(fbflow(&["verify"], &out).status.code(), Some(2));
    assert_eq!(fbflow(&["verify", "sideways"], &out).status.code(), Some(2));
    assert_eq!(fbflow(&["translator", "circle"], &out).status.code(), Some(2));
    assert_eq!(fbflow(&["frobnicate"], &out).status.code(), Some(2));
}

#[test]
fn blowup_classifies_the_circle_extinction() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario(dir.path(), 0.03125);
    let o = fbflow(
        &["blowup", &cfg, "--center", "0,0,0.03125", "--lambda", "4", "--until", "0.04"],
        &dir.path().join("out"),
    );
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(o.status.code(), Some(0), "{stdout}{}", String::from_utf8_lossy(&o.stderr));
    let model: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(model["kind"], "shrinking-sphere");
}
