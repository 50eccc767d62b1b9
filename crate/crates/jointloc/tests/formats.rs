use jointloc::experiment::{run_trial, Algorithm, ExperimentConfig, ScenarioSource};
use jointloc::{
    load_scenario, parse_scenario, read_metrics, run_experiment, save_metrics, save_scenario,
    scenario_to_json, write_metrics, Error,
};
use jointloc_core::model::{generate_synthetic, NoiseKind};
use jointloc_core::{MetricsRecord, SolverParams, SyntheticConfig};

const TWO_NODES: &str = r#"{
  "dimension": 2,
  "nodes": [
    {"id": 0, "kind": "anchor", "position": [0.0, 0.0]},
    {"id": 1, "kind": "agent"}
  ],
  "edges": [{"i": 1, "j": 0, "distance": 0.5}],
  "target_ranges": [{"node": 1, "r": 0.25}, {"node": 0, "r": 0.75}]
}"#;

#[test]
fn hand_written_two_node_file() {
    let s = parse_scenario(TWO_NODES).unwrap();
    assert_eq!(s.dimension(), 2);
    assert_eq!(s.num_nodes(), 2);
    assert!(s.graph().is_anchor(0));
    assert!(!s.graph().is_anchor(1));
    assert_eq!(s.anchor_position(0), Some(&[0.0, 0.0][..]));
    assert_eq!(s.distance(0, 1), Some(0.5));
    assert_eq!(s.target_ranges(), &[0.75, 0.25]);
    assert!(s.truth().is_none());
}

#[test]
fn missing_edge_distance_is_a_validation_error() {
    let text = TWO_NODES.replace(r#"{"i": 1, "j": 0, "distance": 0.5}"#, "");
    assert!(matches!(parse_scenario(&text), Err(Error::Model(_) | Error::Validation(_))));
}

#[test]
fn malformed_files_report_where() {
    match parse_scenario("{\n  \"dimension\": 2,\n  \"nodes\": [oops]\n}") {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("expected a parse error, got {other:?}"),
    }
    let unknown = TWO_NODES.replace("\"dimension\"", "\"colour\": 1, \"dimension\"");
    assert!(matches!(parse_scenario(&unknown), Err(Error::Parse { .. })));
}

#[test]
fn missing_target_range_and_partial_truth_are_rejected() {
    let no_range = TWO_NODES.replace(r#"{"node": 1, "r": 0.25}, "#, "");
    assert!(matches!(parse_scenario(&no_range), Err(Error::Validation(_))));
    let partial = TWO_NODES.replace("\"kind\": \"agent\"}", "\"kind\": \"agent\", \"position\": [0.1, 0.1]}");
    assert!(matches!(parse_scenario(&partial), Err(Error::Validation(_))));
}

#[test]
fn synthetic_scenario_round_trips_exactly() {
    let s = generate_synthetic(&SyntheticConfig::unit_square_100(NoiseKind::RangeDependent, 3)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.json");
    save_scenario(&path, &s).unwrap();
    let back = load_scenario(&path).unwrap();
    assert_eq!(back, s);
    assert_eq!(scenario_to_json(&back), scenario_to_json(&s));
}

fn record(iter: usize) -> MetricsRecord {
    MetricsRecord {
        iter,
        rmse_sensor: Some(0.1 / 3.0),
        rmse_target: None,
        s: 1e-300,
        w: 0.0,
        p: 12.5,
        g: f64::MIN_POSITIVE,
        potential: Some(-2.0),
        wall_nanos: Some(123_456_789),
    }
}

#[test]
fn empty_trace_is_header_only() {
    let mut out = Vec::new();
    write_metrics(&mut out, &[]).unwrap();
    assert_eq!(
        String::from_utf8(out).unwrap(),
        "iter,rmse_sensor,rmse_target,S,W,P,G,potential,wall_nanos\n"
    );
}

#[test]
fn records_round_trip_with_empty_optionals() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.csv");
    let trace = vec![record(1), record(10)];
    save_metrics(&path, &trace).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.lines().nth(1).unwrap().starts_with("1,0.03333333333333333,,"));
    assert_eq!(read_metrics(&path).unwrap(), trace);
}

fn small_config(trials: usize, out: Option<std::path::PathBuf>) -> ExperimentConfig {
    let mut synthetic = SyntheticConfig::unit_square_100(NoiseKind::Awgn, 0);
    synthetic.num_agents = 20;
    synthetic.comm_range = 0.45;
    ExperimentConfig {
        source: ScenarioSource::Synthetic(synthetic),
        algorithm: Algorithm::Both,
        solver: SolverParams {
            max_iters: 60,
            seed: 7,
            record_every: 20,
            ..SolverParams::default()
        },
        stage1_iters: 30,
        stage2_iters: 30,
        trials,
        out_dir: out,
        timing: false,
    }
}

#[test]
fn one_trial_equals_a_direct_run() {
    let cfg = small_config(1, None);
    let summary = run_experiment(&cfg).unwrap();
    let ScenarioSource::Synthetic(synthetic) = &cfg.source else {
        unreachable!()
    };
    let scenario = generate_synthetic(&SyntheticConfig {
        seed: 7,
        ..synthetic.clone()
    })
    .unwrap();
    for algo in [Algorithm::Jcnl, Algorithm::Scnl] {
        let direct = run_trial(&scenario, algo, &cfg, 7).unwrap();
        let s = summary.algorithm(algo.name()).unwrap();
        let last = direct.last_record().unwrap();
        assert_eq!(s.final_rmse_sensor.unwrap().mean, last.rmse_sensor.unwrap());
        assert_eq!(s.final_rmse_sensor.unwrap().std, 0.0);
        assert_eq!(s.final_rmse_target.unwrap().mean, last.rmse_target.unwrap());
        assert_eq!(s.trials[0].target_estimate, direct.target);
        assert!(s.wall_seconds.is_none());
    }
}

#[test]
fn comparison_writes_every_trial_and_a_summary() {
    let dir = tempfile::tempdir().unwrap();
    let summary = run_experiment(&small_config(2, Some(dir.path().to_path_buf()))).unwrap();
    assert_eq!(summary.algorithms.len(), 2);
    assert_eq!(
        summary.algorithm("jcnl").unwrap().iterations,
        summary.algorithm("scnl").unwrap().iterations
    );
    for name in ["jcnl_trial000.csv", "jcnl_trial001.csv", "scnl_trial000.csv", "scnl_trial001.csv"] {
        assert!(!read_metrics(dir.path().join(name)).unwrap().is_empty());
    }
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(json["trials"], 2);
    assert_eq!(json["algorithms"][1]["stages"][0]["name"], "sensors");
}

#[test]
fn zero_trials_is_a_configuration_error() {
    assert!(matches!(run_experiment(&small_config(0, None)), Err(Error::Config(_))));
}
