use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vsoliton"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn check<'a>(r: &'a Value, name: &str) -> &'a Value {
    r["checks"].as_array().unwrap().iter().find(|c| c["name"] == name).unwrap_or_else(|| panic!("no check {name}"))
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("cfg.json");
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

#[test]
fn verify_passes_and_writes_sorted_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["verify", "--grid", "32"], tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let r = report(tmp.path());
    let names: Vec<&str> = r["checks"].as_array().unwrap().iter().map(|c| c["name"].as_str().unwrap()).collect();
    let mut sorted = names.clone();
    sorted.sort();
    assert_eq!(names, sorted);
    assert_eq!(names.len(), 10);
    let flat = check(&r, "flat.integrability");
    assert_eq!(flat["detail"], "exact; order n/a");
    assert!(flat["order"].is_null());
    let h = check(&r, "harmonic.hessian_trace");
    assert_eq!(h["grid"], "32/64");
    assert!((h["order"].as_f64().unwrap() - 2.0).abs() < 0.3);
    let csv = fs::read_to_string(tmp.path().join("report.csv")).unwrap();
    assert!(csv.starts_with("name,residual,tolerance,pass,order,grid,detail\n"));
    assert_eq!(csv.lines().count(), 11);
    assert!(tmp.path().join("timing.json").exists());
}

#[test]
fn reports_are_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(&["flip", "--grid", "751"], a.path())), 0);
    assert_eq!(code(&run(&["flip", "--grid", "751"], b.path())), 0);
    for f in ["report.json", "report.csv", "series.csv", "profile.csv", "descent.json"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn corrupted_metric_fails_the_named_identities() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), r#"{"version": 1, "verify": {"charts": ["harmonic"], "corrupt": true, "grid": 32}}"#);
    let o = run(&["verify", "--config", &cfg], tmp.path());
    assert_eq!(code(&o), 1);
    let r = report(tmp.path());
    assert_eq!(check(&r, "harmonic.integrability")["pass"], false);
    assert_eq!(check(&r, "harmonic.dtheta_closed")["pass"], false);
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL harmonic.integrability"));
}

#[test]
fn config_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    for (text, needle) in [
        (r#"{"version": 1, "verify": {"grid": 32, "gird": 3}}"#, "unknown field"),
        (r#"{"version": 1, "bogus": {}}"#, "unknown field"),
        (r#"{"version": 7}"#, "schema version"),
        (r#"{"version": 1, "flow": {"tol": -1.0}}"#, "flow.tol"),
    ] {
        let cfg = write_config(tmp.path(), text);
        let cmd = if text.contains("flow") { "flow" } else { "verify" };
        let o = run(&[cmd, "--config", &cfg], tmp.path());
        assert_eq!(code(&o), 2, "{text}");
        assert!(String::from_utf8_lossy(&o.stderr).contains(needle), "{text}: {}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(code(&run(&["verify", "--config", "/nonexistent.json"], tmp.path())), 2);
    assert_eq!(code(&run(&["transmogrify"], tmp.path())), 2);
    assert_eq!(code(&run(&["verify", "--grid", "many"], tmp.path())), 2);
}

#[test]
fn flags_override_the_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), r#"{"version": 1, "verify": {"charts": ["flat"], "grid": 64}}"#);
    assert_eq!(code(&run(&["verify", "--config", &cfg, "--grid", "16"], tmp.path())), 0);
    let r = report(tmp.path());
    assert_eq!(check(&r, "flat.hessian_trace")["grid"], "16/32");
    assert_eq!(r["checks"].as_array().unwrap().len(), 5);
}

#[test]
fn critical_moment_value_is_a_named_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), r#"{"version": 1, "flip": {"tau_range": [-0.1, 0.3], "n_r": 751}}"#);
    let o = run(&["flip", "--config", &cfg], tmp.path());
    assert_eq!(code(&o), 1);
    let r = report(tmp.path());
    let d = check(&r, "descent");
    assert_eq!(d["pass"], false);
    assert!(d["detail"].as_str().unwrap().contains("critical"));
    // the checks before the descent still ran
    assert_eq!(check(&r, "series.a2")["pass"], true);
}

#[test]
fn oversized_step_fails_the_integration_check() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), r#"{"version": 1, "flow": {"dt": 1.0}}"#);
    assert_eq!(code(&run(&["flow", "--config", &cfg], tmp.path())), 1);
    let r = report(tmp.path());
    assert!(check(&r, "integration")["detail"].as_str().unwrap().contains("stability"));
}

#[test]
fn flow_writes_the_trajectory() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(&["flow", "--grid", "33"], tmp.path())), 0);
    let traj: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("trajectory.json")).unwrap()).unwrap();
    assert_eq!(traj["times"].as_array().unwrap().len(), 11);
    let csv = fs::read_to_string(tmp.path().join("trajectory.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 11 * 33);
}

#[test]
fn solve_writes_solution_and_newton_history() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), r#"{"version": 1, "solve": {"chart": "round", "n_tau": 33}}"#);
    let o = run(&["solve", "--config", &cfg], tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let r = report(tmp.path());
    assert_eq!(check(&r, "closed_form")["pass"], true);
    let sol: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("solution.json")).unwrap()).unwrap();
    assert_eq!(sol["u"].as_array().unwrap().len(), 33);
    let csv = fs::read_to_string(tmp.path().join("newton_report.csv")).unwrap();
    assert!(csv.starts_with("iter,residual,damping,jv_slack\n"));
}

#[test]
fn corrupted_f_fails_the_soliton_part() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), r#"{"version": 1, "lift-descend": {"corrupt_f": true, "n_tau": 33}}"#);
    assert_eq!(code(&run(&["lift-descend", "--config", &cfg], tmp.path())), 1);
    let r = report(tmp.path());
    assert_eq!(check(&r, "vsoliton.part4")["pass"], false);
    // the product lift does not depend on the corrupted f
    assert_eq!(check(&r, "product.linear")["pass"], true);
}

#[test]
fn seeded_fixtures_run_with_their_expected_outcome() {
    let tmp = tempfile::tempdir().unwrap();
    let expected = [
        ("verify", "verify.json", 0),
        ("verify", "verify-corrupted.json", 1),
        ("flow", "flow-ke.json", 0),
        ("flow", "flow-perturbed.json", 0),
        ("flow", "flow-unstable.json", 1),
        ("lift-descend", "lift-descend.json", 0),
        ("lift-descend", "lift-descend-flat-product.json", 0),
        ("lift-descend", "lift-descend-corrupted.json", 1),
        ("solve", "solve-torus.json", 0),
        ("solve", "solve-round.json", 0),
        ("flip", "flip.json", 0),
        ("flip", "flip-critical.json", 1),
    ];
    for cmd in ["verify", "flow", "lift-descend", "solve", "flip"] {
        assert_eq!(code(&run(&[cmd, "--seed-fixtures"], tmp.path())), 0);
    }
    let seeded = fs::read_dir(tmp.path().join("fixtures")).unwrap().count();
    assert_eq!(seeded, expected.len());
    for (cmd, file, want) in expected {
        let cfg = tmp.path().join("fixtures").join(file).display().to_string();
        let out = tmp.path().join(file.trim_end_matches(".json"));
        let o = run(&[cmd, "--config", &cfg], &out);
        assert_eq!(code(&o), want, "{file}: {}", String::from_utf8_lossy(&o.stdout));
    }
}
