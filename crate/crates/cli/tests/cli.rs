use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use pumpsched_core::network::canonical_network;
use pumpsched_core::{simulate_eps, GroupSchedule};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pumpsched")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn optimize_into(dir: &Path) -> Output {
    run(&["optimize", "--horizon", "6", "--out-dir", path(dir)])
}

#[test]
fn simulate_writes_baseline_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["simulate", "--out-dir", path(dir.path())]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let sim: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("simulation.json")).unwrap()).unwrap();
    let net = canonical_network();
    let direct = simulate_eps(&net, &GroupSchedule::flat(&net)).unwrap();
    assert_eq!(sim["cost"].as_f64().unwrap(), direct.cost);
    let levels = fs::read_to_string(dir.path().join("tank_levels.csv")).unwrap();
    assert_eq!(levels.lines().count(), 1 + 24);
    assert!(levels.starts_with("k,tank,level"));
}

#[test]
fn simulate_rejects_a_short_schedule() {
    let dir = tempfile::tempdir().unwrap();
    let net = canonical_network();
    let mut schedule = GroupSchedule::flat(&net);
    schedule.controls[0].truncate(10);
    let file = dir.path().join("schedule.json");
    fs::write(&file, serde_json::to_string(&schedule.to_file(&net)).unwrap()).unwrap();
    let out = run(&["simulate", "--schedule", path(&file), "--out-dir", path(dir.path())]);
    assert_eq!(code(&out), 1);
    assert!(!dir.path().join("simulation.json").exists());
}

#[test]
fn missing_network_file_is_an_input_error() {
    let out = run(&["simulate", "--network", "/nonexistent/net.json"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/net.json"));
}

#[test]
fn optimize_is_reproducible_and_validates() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let out = optimize_into(a.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(code(&optimize_into(b.path())), 0);
    for name in ["report.json", "solution.json", "problem.json", "schedule.json", "timing.json", "schedule.csv", "cost_tariff.csv", "tank_levels.csv"] {
        assert!(a.path().join(name).exists(), "{name}");
    }
    let read = |d: &Path, n: &str| fs::read_to_string(d.join(n)).unwrap();
    assert_eq!(read(a.path(), "report.json"), read(b.path(), "report.json"));
    assert_eq!(read(a.path(), "schedule.csv"), read(b.path(), "schedule.csv"));
    let report: serde_json::Value = serde_json::from_str(&read(a.path(), "report.json")).unwrap();
    assert!(report["resimulated_cost"].as_f64().unwrap() > 0.0);
    assert_eq!(report["validation"]["pass"], true);

    // The optimized schedule simulates through the CLI as well.
    let sim_dir = tempfile::tempdir().unwrap();
    let sched = a.path().join("schedule.json");
    let out = run(&["simulate", "--horizon", "6", "--schedule", path(&sched), "--out-dir", path(sim_dir.path())]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let sim: serde_json::Value = serde_json::from_str(&read(sim_dir.path(), "simulation.json")).unwrap();
    let (c1, c2) = (sim["cost"].as_f64().unwrap(), report["resimulated_cost"].as_f64().unwrap());
    assert!((c1 - c2).abs() <= 1e-9 * c2, "{c1} vs {c2}");

    let problem = a.path().join("problem.json");
    let solution = a.path().join("solution.json");
    let out = run(&["validate", "--problem", path(&problem), "--solution", path(&solution)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["pass"], true);
}

#[test]
fn validate_flags_a_fractional_binary_identically_for_mps_and_json() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&optimize_into(dir.path())), 0);
    let mps = dir.path().join("problem.mps");
    let out = run(&["export-mps", "--horizon", "6", "--out", path(&mps)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let solution = dir.path().join("solution.json");
    let mut sol: serde_json::Value = serde_json::from_str(&fs::read_to_string(&solution).unwrap()).unwrap();
    let status_col = sol["values"].as_object().unwrap().keys().find(|k| k.starts_with("n.")).unwrap().clone();
    sol["values"][&status_col] = serde_json::json!(0.5);
    let broken = dir.path().join("broken.json");
    fs::write(&broken, serde_json::to_string(&sol).unwrap()).unwrap();

    for problem in [dir.path().join("problem.json"), mps.clone()] {
        let good = run(&["validate", "--problem", path(&problem), "--solution", path(&solution)]);
        assert_eq!(code(&good), 0, "{}", String::from_utf8_lossy(&good.stderr));
        let bad = run(&["validate", "--problem", path(&problem), "--solution", path(&broken)]);
        assert_eq!(code(&bad), 2);
        let stderr = String::from_utf8_lossy(&bad.stderr);
        assert!(stderr.contains(&status_col), "{stderr}");
    }
    // Internal problems carry row families, so the failing family is named.
    let bad = run(&["validate", "--problem", path(&dir.path().join("problem.json")), "--solution", path(&broken)]);
    assert!(String::from_utf8_lossy(&bad.stderr).contains("PumpSegmentSelect"));
}

#[test]
fn export_only_writes_mps_without_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let mps = dir.path().join("k6.mps");
    let out = run(&["optimize", "--horizon", "6", "--export-mps", path(&mps), "--export-only", "--out-dir", path(dir.path())]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&mps).unwrap();
    assert!(text.starts_with("NAME"));
    assert!(text.trim_end().ends_with("ENDATA"));
    assert!(!dir.path().join("report.json").exists());
}

#[test]
fn invalid_gap_is_a_solver_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["optimize", "--horizon", "2", "--gap", "2", "--out-dir", path(dir.path())]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn batch_writes_per_scenario_files_and_signals_partial_failure() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    fs::write(&spec, r#"{"elevations": [230.0], "offsets": [-0.5, 0.5], "demands": [42.7], "diameters": [15.0]}"#).unwrap();
    let out_dir = dir.path().join("ok");
    let out = run(&["batch", "--horizon", "6", "--spec", path(&spec), "--jobs", "2", "--out-dir", path(&out_dir)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["total"], 2);
    assert_eq!(summary["reached_gap"], 2);
    let scenarios: Vec<_> = fs::read_dir(out_dir.join("scenarios")).unwrap().collect();
    assert_eq!(scenarios.len(), 2);
    let stats = fs::read_to_string(out_dir.join("batch_stats.csv")).unwrap();
    assert_eq!(stats.lines().count(), 3);
    // No temporary files are left behind.
    for entry in fs::read_dir(&out_dir).unwrap() {
        assert!(!entry.unwrap().file_name().to_string_lossy().ends_with(".tmp"));
    }

    fs::write(&spec, r#"{"elevations": [230.0], "offsets": [0.0], "demands": [42.7], "diameters": [15.0, -1.0]}"#).unwrap();
    let out_dir = dir.path().join("partial");
    let out = run(&["batch", "--horizon", "6", "--spec", path(&spec), "--out-dir", path(&out_dir)]);
    assert_eq!(code(&out), 4, "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["failed"], 1);
    assert!(summary["scenarios"][1]["error"].is_string());
}

#[test]
fn seeded_perturbation_changes_the_baseline_reproducibly() {
    let (a, b, c) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for (dir, seed) in [(&a, "1"), (&b, "1"), (&c, "2")] {
        assert_eq!(code(&run(&["simulate", "--seed", seed, "--out-dir", path(dir.path())])), 0);
    }
    let read = |d: &tempfile::TempDir| fs::read_to_string(d.path().join("simulation.json")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
}
