use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use freezebox::config::{parse_config, parse_config_str};

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn freezebox(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_freezebox"))
        .args(args)
        .current_dir(cwd)
        .env("FREEZEBOX_THREADS", "1")
        .output()
        .unwrap()
}

fn simulate(config: &Path, dir: &Path) -> Output {
    freezebox(
        &["simulate", config.to_str().unwrap(), "--out", dir.to_str().unwrap()],
        dir.parent().unwrap(),
    )
}

/// A short copy of the freezing scenario.
fn short_freezing(tmp: &Path) -> PathBuf {
    let text = fs::read_to_string(configs().join("freezing.json"))
        .unwrap()
        .replace(r#""t_final": 1.0"#, r#""t_final": 0.1"#)
        .replace(r#""cells": [200]"#, r#""cells": [50]"#)
        .replace("[1.0, 0.0]]", "[0.1, 0.0]]")
        .replace("[0.5, 0.05]", "[0.05, 0.05]");
    let path = tmp.join("short.json");
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn stationary_run_verifies() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    let out = simulate(&configs().join("stationary.json"), &dir);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["config.json", "energy_ledger.csv", "entropy_ledger.csv", "steps.csv", "summary.json"] {
        assert!(dir.join(f).is_file(), "{f}");
    }
    assert!(dir.join("plots/theta_range.svg").is_file());
    // Snapshots of a stationary run differ only in their step and time.
    let body = |p: PathBuf| -> String {
        fs::read_to_string(p).unwrap().lines().filter(|l| !l.starts_with("# step")).collect()
    };
    assert_eq!(
        body(dir.join("snapshots/step_000000.csv")),
        body(dir.join("snapshots/step_001000.csv"))
    );
    let out = freezebox(&["verify", dir.to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn tampered_snapshot_fails_energy_check() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    let out = simulate(&short_freezing(tmp.path()), &dir);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let snap = fs::read_dir(dir.join("snapshots"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| !p.ends_with("step_000000.csv"))
        .min()
        .unwrap();
    let text = fs::read_to_string(&snap).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let row = lines.iter().position(|l| l.starts_with("10,")).unwrap();
    let mut cols: Vec<String> = lines[row].split(',').map(String::from).collect();
    cols[2] = (cols[2].parse::<f64>().unwrap() * 1.1).to_string();
    lines[row] = cols.join(",");
    fs::write(&snap, lines.join("\n")).unwrap();
    let out = freezebox(&["verify", dir.to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn mismatched_header_is_refused() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    simulate(&short_freezing(tmp.path()), &dir);
    let snap = dir.join("snapshots/step_000000.csv");
    let text = fs::read_to_string(&snap).unwrap().replace("# tau=0.001", "# tau=0.002");
    fs::write(&snap, text).unwrap();
    let out = freezebox(&["verify", dir.to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("tau"));
}

#[test]
fn single_thread_runs_are_bitwise_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = short_freezing(tmp.path());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    simulate(&cfg, &a);
    simulate(&cfg, &b);
    for f in ["energy_ledger.csv", "entropy_ledger.csv", "steps.csv", "summary.json", "snapshots/step_000100.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(configs().join("stationary.json"))
        .unwrap()
        .replace(r#""chi": { "constant": 1.0 }"#, r#""chi": { "constant": 1.5 }"#);
    let path = tmp.path().join("bad.json");
    fs::write(&path, text).unwrap();
    let out = freezebox(&["simulate", path.to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("0 ≤ χ⁰ ≤ 1"));
    let out = freezebox(&["verify", tmp.path().join("missing").to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn perturbation_study_refuses_variable_conductivity() {
    let tmp = tempfile::tempdir().unwrap();
    let out = freezebox(
        &["study", "perturb", configs().join("stationary.json").to_str().unwrap(), "--out", "study"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("constant conductivity"));
}

#[test]
fn stationary_tau_study_has_zero_distances() {
    let tmp = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(configs().join("stationary.json"))
        .unwrap()
        .replace(r#""t_final": 1.0"#, r#""t_final": 0.05"#);
    let path = tmp.path().join("s.json");
    fs::write(&path, text).unwrap();
    let out = freezebox(&["study", "tau", path.to_str().unwrap(), "--out", "study"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("study/study_tau.json")).unwrap()).unwrap();
    assert!(report["distances"].as_array().unwrap().iter().all(|d| d.as_f64() == Some(0.0)));
}

#[test]
fn material_check_reports_hypotheses() {
    let tmp = tempfile::tempdir().unwrap();
    let out = freezebox(&["material-check", configs().join("freezing.json").to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("R₀ = 2.000000"), "{text}");
    let bad = fs::read_to_string(configs().join("stationary.json"))
        .unwrap()
        .replace(r#""name": "reference""#, r#""name": "reference", "overrides": {"c": [1.0, -1.0]}"#);
    let path = tmp.path().join("bad.json");
    fs::write(&path, bad).unwrap();
    let out = freezebox(&["material-check", path.to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn shipped_configs_round_trip() {
    for name in ["freezing", "stationary", "perturbation"] {
        let c = parse_config(&configs().join(format!("{name}.json"))).unwrap();
        let text = serde_json::to_string(&c).unwrap();
        let back = parse_config_str(&text).unwrap();
        assert_eq!(serde_json::to_string(&back).unwrap(), text, "{name}");
    }
}
