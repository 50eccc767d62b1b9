use std::path::Path;
use std::process::{Command, Output};

fn jointloc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jointloc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn generate_solve_and_thresholds() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("s.json");
    let out = jointloc(&[
        "generate", "--agents", "15", "--anchors", "3", "--range", "0.5", "--seed", "2", "--out",
        arg(&scenario),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let metrics = dir.path().join("m.csv");
    let out = jointloc(&[
        "--threads", "2", "solve", "--scenario", arg(&scenario), "--algo", "scnl",
        "--stage1-iters", "20", "--stage2-iters", "20", "--record-every", "5", "--out",
        arg(&metrics), "--no-timing",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["algorithm"], "scnl");
    assert_eq!(report["iterations"], 40);
    let csv = std::fs::read_to_string(&metrics).unwrap();
    assert!(csv.starts_with("iter,rmse_sensor,rmse_target,S,W,P,G,potential,wall_nanos\n"));

    let out = jointloc(&["thresholds", "--scenario", arg(&scenario), "--c", "0.5", "--rho", "1"]);
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["kappa1_min"].as_f64().unwrap() > 0.0);
    assert_eq!(report["satisfied"]["rho"], false);
}

#[test]
fn compare_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("s.json");
    assert!(jointloc(&["generate", "--agents", "12", "--range", "0.5", "--out", arg(&scenario)])
        .status
        .success());
    let results = dir.path().join("results");
    let out = jointloc(&[
        "compare", "--scenario", arg(&scenario), "--trials", "2", "--iters", "30",
        "--stage1-iters", "15", "--stage2-iters", "15", "--out-dir", arg(&results),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(results.join("summary.json").exists());
    assert!(results.join("scnl_trial001.csv").exists());
}

#[test]
fn errors_exit_nonzero_with_a_message() {
    let out = jointloc(&["solve", "--scenario", "/nonexistent/s.json", "--out", "/tmp/x.csv"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/s.json"));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"dimension\": 2}").unwrap();
    let out = jointloc(&["thresholds", "--scenario", arg(&bad), "--c", "1"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}
