use std::process::Command;

fn claimlock(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_claimlock")).args(args).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stdout).into_owned())
}

#[test]
fn explore_exit_codes() {
    assert_eq!(claimlock(&["explore", "-n", "2", "-c", "1"]).0, 0);
    assert_eq!(claimlock(&["explore", "-n", "2", "--mutant", "single-schedule-cas"]).0, 1);
    assert_eq!(claimlock(&["explore", "-n", "3", "--max-states", "100"]).0, 2);
    assert_eq!(claimlock(&["explore", "-n", "4"]).0, 64);
    assert_eq!(claimlock(&["explore", "-c", "3"]).0, 64);
    assert_eq!(claimlock(&["bogus"]).0, 64);
    assert_eq!(claimlock(&["--help"]).0, 0);
}

#[test]
fn explore_writes_a_json_report() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    let (code, _) = claimlock(&["explore", "-n", "2", "-c", "2", "-o", path.to_str().unwrap()]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(v["complete"], true);
    assert!(v["states"].as_u64().unwrap() > 1000);
    assert!(v["nondeterminism"].is_object());
}

#[test]
fn cas_report_prints_every_row() {
    let (code, out) = claimlock(&["cas-report", "-n", "2", "-c", "1"]);
    assert_eq!(code, 0, "{out}");
    for verdict in out.lines().filter(|l| l.trim_start().starts_with('(')) {
        assert!(!verdict.contains("FAIL"), "{verdict}");
    }
}

#[test]
fn stress_small_run_passes() {
    let (code, out) = claimlock(&["stress", "-n", "3", "-i", "500", "-k", "2", "--seed", "5"]);
    assert_eq!(code, 0, "{out}");
    assert!(out.contains("counter 1500 (expected 1500)"));
}
