use std::path::Path;

use serde_json::Value;
use ttplab::cli::main_with_args;

fn run(dir: &Path, args: &[&str], config: Option<&str>) -> i32 {
    let mut argv: Vec<String> = vec!["ttplab".into()];
    argv.extend(args.iter().map(|s| s.to_string()));
    if let Some(body) = config {
        let path = dir.join("config.json");
        std::fs::write(&path, body).unwrap();
        argv.push("--config".into());
        argv.push(path.display().to_string());
    }
    argv.push("--out".into());
    argv.push(dir.join("out").display().to_string());
    main_with_args(argv)
}

fn read_json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

const SIMULATE: &str = r#"{
    "scenario": {"id": "rigid-rotation", "params": {"omega": 0.2}},
    "t1": 0.1, "dt": 0.01, "quadrature_order": [6, 6, 2],
    "particles": [{"r0": [1.0, 0.0, 0.0], "beta": 0.5, "direction": [0.0, 1.0, 0.0]}]
}"#;

#[test]
fn p0_solve_reports_the_uniform_root() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["p0-solve"], None), 0);
    let m = read_json(dir.path().join("out/manifest.json"));
    let p0 = m["results"]["p0"].as_f64().unwrap();
    let expect = 1.0 / (2.0 * std::f64::consts::PI * std::f64::consts::E);
    assert!((p0 - expect).abs() < 1e-12 * expect, "{p0}");
    assert_eq!(m["command"], "p0-solve");
    assert_eq!(m["scenario"], "uniform");
    assert!(m.get("threads").is_none());
    let files = m["files"].as_array().unwrap();
    assert_eq!(files.len(), 1);
    assert_eq!(files[0]["name"], "p0.json");
}

#[test]
fn unknown_configuration_fields_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["p0-solve"], Some(r#"{"scenaro": "uniform"}"#)), 2);
    let e = read_json(dir.path().join("out/error.json"));
    assert_eq!(e["kind"], "usage");
    assert_eq!(e["exit_code"], 2);
    assert_eq!(e["command"], "p0-solve");
}

#[test]
fn configuration_must_match_the_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["p0-solve"], Some(r#"{"command": "simulate"}"#)), 2);
    assert_eq!(run(dir.path(), &["p0-solve"], Some(r#"{"command": "p0-solve"}"#)), 0);
}

#[test]
fn missing_entropy_root_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let code = run(dir.path(), &["p0-solve"], Some(r#"{"scenario": "rigid-rotation", "quadrature_order": [6, 6, 2]}"#));
    assert_eq!(code, 3);
    let e = read_json(dir.path().join("out/error.json"));
    assert_eq!(e["kind"], "numerical");
    assert!(!dir.path().join("out/manifest.json").exists());
}

#[test]
fn bad_arguments_exit_with_usage() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["integrate"], None), 2);
    assert_eq!(run(dir.path(), &["simulate", "--threads", "many"], None), 2);
    // simulate without particles
    assert_eq!(run(dir.path(), &["simulate"], None), 2);
    assert_eq!(main_with_args(["ttplab", "--help"]), 0);
}

#[test]
fn simulate_writes_trajectories_and_plot_data() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["simulate", "--emit-plot-data"], Some(SIMULATE)), 0);
    let out = dir.path().join("out");
    for f in ["trajectory_000.csv", "p0_ledger.csv", "simulate.json", "plot/trajectory_000_xyz.csv", "plot/p0_ledger.csv"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let csv = std::fs::read_to_string(out.join("trajectory_000.csv")).unwrap();
    assert_eq!(csv.lines().count(), 12);
    let m = read_json(out.join("manifest.json"));
    let names: Vec<&str> = m["files"].as_array().unwrap().iter().map(|f| f["name"].as_str().unwrap()).collect();
    assert!(names.contains(&"plot/p0_ledger.csv"));
}

#[test]
fn seed_enters_the_configuration_hash() {
    let dir = tempfile::tempdir().unwrap();
    let hash = |seed: &str| {
        assert_eq!(run(dir.path(), &["p0-solve", "--seed", seed], None), 0);
        let m = read_json(dir.path().join("out/manifest.json"));
        (m["config_sha256"].as_str().unwrap().to_string(), m["content_digest"].as_str().unwrap().to_string())
    };
    let (a, da) = hash("1");
    let (b, db) = hash("2");
    assert_ne!(a, b);
    assert_eq!(da, db);
    assert_eq!(hash("1").0, a);
}

#[test]
fn residuals_command_passes_on_a_builtin() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"scenario": "taylor-green", "residuals": {"points_per_axis": 3, "times": 2}}"#;
    assert_eq!(run(dir.path(), &["residuals"], Some(cfg)), 0);
    let m = read_json(dir.path().join("out/manifest.json"));
    assert!(m["results"]["max_abs_residual"].as_f64().unwrap() < 1e-10);
}
