use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn plap(args: &[&str], runs: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_plap"))
        .args(args)
        .env("PLAP_RUNS_DIR", runs)
        .output()
        .unwrap()
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn all_passed(r: &Value) -> bool {
    r["verdicts"].as_array().unwrap().iter().all(|v| v["passed"] == true)
}

#[test]
fn unknown_experiment_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = plap(&["nonesuch"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn p_two_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let out = plap(&["giant", "--set", "p=2"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("requires p > 2"));
}

#[test]
fn unknown_key_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.toml");
    std::fs::write(&cfg, "[giant]\ncels = [11]\n").unwrap();
    let out = plap(&["giant", "--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn barenblatt_defaults_pass_with_monotone_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    let out = plap(&["barenblatt", "--out", dir.to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let r = report(&dir);
    assert_eq!(r["config"]["resolutions"], serde_json::json!([0.05, 0.025, 0.0125]));
    let csv = std::fs::read_to_string(dir.join("errors.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "l1_error").unwrap();
    let errors: Vec<f64> = lines.map(|l| l.split(',').nth(col).unwrap().parse().unwrap()).collect();
    assert_eq!(errors.len(), 3);
    assert!(errors.windows(2).all(|w| w[1] < w[0]), "{errors:?}");
}

#[test]
fn default_run_dir_uses_env_root_and_timestamp() {
    let tmp = tempfile::tempdir().unwrap();
    let out = plap(&["dirac"], tmp.path());
    assert_eq!(out.status.code(), Some(0));
    let runs: Vec<_> = std::fs::read_dir(tmp.path().join("dirac")).unwrap().collect();
    assert_eq!(runs.len(), 1);
    let dir = runs[0].as_ref().unwrap().path();
    assert!(dir.join("report.json").exists());
    assert!(dir.join("trace.csv").exists());
}

#[test]
fn slanted_exit_zero_when_nonexistence_indicator_holds() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("s");
    let out = plap(&["slanted", "--set", "ladder=[10.0, 100.0, 1000.0]", "--out", dir.to_str().unwrap()], tmp.path());
    let r = report(&dir);
    assert!(all_passed(&r), "{}", String::from_utf8_lossy(&out.stdout));
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn exit_code_follows_verdicts() {
    let tmp = tempfile::tempdir().unwrap();
    // Giant with an impossible agreement threshold: the run succeeds but a
    // verdict fails.
    let dir = tmp.path().join("g");
    let out = plap(
        &["giant", "--set", "cells=[41]", "--set", "agreement=1e-300", "--out", dir.to_str().unwrap()],
        tmp.path(),
    );
    let r = report(&dir);
    assert!(!all_passed(&r));
    assert_eq!(out.status.code(), Some(1));
    let dir = tmp.path().join("g2");
    let out = plap(&["giant", "--set", "cells=[41]", "--out", dir.to_str().unwrap()], tmp.path());
    assert!(all_passed(&report(&dir)));
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn solver_failure_exits_three_with_diagnostic_json() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("f");
    let out = plap(
        &["giant", "--set", "cells=[41]", "--set", "elliptic.newton_max=1", "--set", "elliptic.flow_max_steps=1", "--out", dir.to_str().unwrap()],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let failure: Value = serde_json::from_str(&std::fs::read_to_string(dir.join("failure.json")).unwrap()).unwrap();
    assert_eq!(failure["experiment"], "giant");
    assert!(!failure["error"].as_str().unwrap().is_empty());
    let stderr: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(stderr, failure);
}

#[test]
fn rerun_from_embedded_config_reproduces_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let first = tmp.path().join("a");
    let out = plap(&["giant", "--set", "cells=[51]", "--out", first.to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(0));
    let r1 = report(&first);
    let toml_cfg = toml_from_json(&serde_json::json!({ "giant": r1["config"].clone() }));
    let cfg = tmp.path().join("again.toml");
    std::fs::write(&cfg, toml_cfg).unwrap();
    let second = tmp.path().join("b");
    let out = plap(&["giant", "--config", cfg.to_str().unwrap(), "--out", second.to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r2 = report(&second);
    assert_eq!(r1["metrics"], r2["metrics"]);
}

#[test]
fn seed_makes_proptest_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        let out = plap(&["proptest", "--set", "seed=7", "--set", "trials=6", "--out", d.to_str().unwrap()], tmp.path());
        assert_eq!(out.status.code(), Some(0));
    }
    assert_eq!(report(&a)["metrics"], report(&b)["metrics"]);
    assert_eq!(report(&a)["config"]["seed"], 7);
}

#[test]
fn print_config_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let out = plap(&["minorant", "--set", "dt=2e-4", "--print-config"], tmp.path());
    assert_eq!(out.status.code(), Some(0));
    let cfg = tmp.path().join("c.toml");
    std::fs::write(&cfg, &out.stdout).unwrap();
    let again = plap(&["minorant", "--config", cfg.to_str().unwrap(), "--print-config"], tmp.path());
    assert_eq!(out.stdout, again.stdout);
    assert!(String::from_utf8_lossy(&out.stdout).contains("dt = 0.0002"));
}

/// TOML text for a JSON object; unset options (null) are dropped.
fn toml_from_json(v: &Value) -> String {
    fn strip(v: &Value) -> Value {
        match v {
            Value::Object(m) => Value::Object(
                m.iter()
                    .filter(|(_, x)| !x.is_null())
                    .map(|(k, x)| (k.clone(), strip(x)))
                    .collect(),
            ),
            other => other.clone(),
        }
    }
    let value: toml::Value = serde_json::from_value(strip(v)).unwrap();
    toml::to_string(&value).unwrap()
}
