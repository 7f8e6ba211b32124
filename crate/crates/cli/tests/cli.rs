use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn eqeffort(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eqeffort"))
        .args(args)
        .env("EQEFFORT_LOG", "error")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn synthetic(dir: &Path, name: &str, s_effect: f64) -> String {
    let path = dir.join(name);
    fs::write(
        &path,
        format!(
            r#"
[data]
format = "synthetic"
n = 5000
s_effect = {s_effect}
seed = 3

[audit]
gamma = [0.35, 0.5, 0.65]

[output]
dir = "out-{name}"
"#
        ),
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

/// A small labelled CSV with a treatment effect and no group effect.
fn csv_config(dir: &Path) -> String {
    let mut rows = String::from("gender,school,region,approved\n");
    for i in 0..600u32 {
        let gender = if i % 2 == 0 { "m" } else { "f" };
        let school = (i / 2) % 4;
        let region = if (i / 8) % 2 == 0 { "north" } else { "south" };
        let approved = if (i * 7 + school * 3) % 10 < 2 + 2 * school { "yes" } else { "no" };
        rows += &format!("{gender},{school},{region},{approved}\n");
    }
    fs::write(dir.join("loans.csv"), rows).unwrap();
    let path = dir.join("loans.toml");
    fs::write(
        &path,
        r#"
[data]
path = "loans.csv"

[schema]
protected = "gender"
protected_pos = "m"
protected_neg = "f"
treatment = "school"
treatment_levels = [0, 1, 2, 3]
outcome = "approved"
outcome_pos = "yes"
outcome_neg = "no"
covariates = ["region"]

[values.region]
north = 0
south = 1

[audit]
backends = ["regression", "weighting"]

[output]
dir = "out-loans"
"#,
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn planted_gap_is_detected_and_reports_are_written() {
    let dir = TempDir::new().unwrap();
    let cfg = synthetic(dir.path(), "planted.toml", 0.15);
    let o = eqeffort(&["audit", "--config", &cfg]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stdout(&o).contains("verdict: discrimination"));
    let out = dir.path().join("out-planted.toml");
    for backend in ["weighting", "regression", "scm"] {
        let json = fs::read_to_string(out.join(format!("{backend}-system.json"))).unwrap();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["verdict"], true);
        assert!(out.join(format!("{backend}-system.txt")).exists());
    }
    assert!(out.join("comparison.txt").exists() && out.join("comparison.csv").exists());
}

#[test]
fn symmetric_data_exits_zero_and_flags_override() {
    let dir = TempDir::new().unwrap();
    let fair = synthetic(dir.path(), "fair.toml", 0.0);
    assert_eq!(code(&eqeffort(&["audit", "--config", &fair])), 0);
    let planted = synthetic(dir.path(), "planted.toml", 0.15);
    let o = eqeffort(&["audit", "--config", &planted, "--backend", "scm,weighting", "--tau", "1.5"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = dir.path().join("out-planted.toml");
    assert!(!out.join("regression-system.json").exists());
    let o = eqeffort(&["audit", "--config", &planted, "--backend", "regression", "--gamma-range", "0.3,0.7", "--level", "group:x=1"]);
    assert_eq!(code(&o), 2);
    assert!(out.join("regression-group-x-1.json").exists());
}

#[test]
fn identical_runs_write_identical_reports() {
    let dir = TempDir::new().unwrap();
    let cfg = synthetic(dir.path(), "planted.toml", 0.15);
    let read = |sub: &str| fs::read(dir.path().join(sub).join("scm-system.json")).unwrap();
    eqeffort(&["audit", "--config", &cfg, "--out", dir.path().join("a").to_str().unwrap()]);
    eqeffort(&["audit", "--config", &cfg, "--out", dir.path().join("b").to_str().unwrap()]);
    assert_eq!(read("a"), read("b"));
}

#[test]
fn csv_input_and_config_errors() {
    let dir = TempDir::new().unwrap();
    let cfg = csv_config(dir.path());
    let o = eqeffort(&["audit", "--config", &cfg]);
    assert!(matches!(code(&o), 0 | 2), "{}", stderr(&o));
    assert!(stdout(&o).contains("m Regression"));

    let o = eqeffort(&["audit", "--config", &cfg, "--backend", "scm"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("graph"));

    fs::write(dir.path().join("g.txt"), "gender -> approved\nregion -> school\nregion -> approved\nschool -> approved\n").unwrap();
    let graph = dir.path().join("g.txt");
    let o = eqeffort(&["audit", "--config", &cfg, "--backend", "scm", "--graph", graph.to_str().unwrap()]);
    assert!(matches!(code(&o), 0 | 2), "{}", stderr(&o));

    let o = eqeffort(&["audit", "--config", &cfg, "--level", "group:nowhere=1"]);
    assert_eq!(code(&o), 1);
    let o = eqeffort(&["audit", "--config", &cfg, "--gamma-range", "0.8,0.2"]);
    assert_eq!(code(&o), 1);
    let o = eqeffort(&["audit", "--config", dir.path().join("missing.toml").to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert_eq!(code(&eqeffort(&["audit"])), 1);
}

#[test]
fn repair_writes_artifacts_and_reports_effectiveness() {
    let dir = TempDir::new().unwrap();
    let cfg = synthetic(dir.path(), "planted.toml", 0.15);
    let out = dir.path().join("out-planted.toml");
    let o = eqeffort(&["repair", "--config", &cfg, "--lambda", "5", "--seed", "4"]);
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
    let csv = fs::read_to_string(out.join("repaired.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5001);
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("repair-manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 4);
    assert_eq!(manifest["audit_verdict"], false);
    assert!(out.join("repaired-regression-system.json").exists());

    // same seed, same bytes
    let again = dir.path().join("again");
    eqeffort(&["repair", "--config", &cfg, "--lambda", "5", "--seed", "4", "--out", again.to_str().unwrap()]);
    assert_eq!(fs::read_to_string(again.join("repaired.csv")).unwrap(), csv);

    let o = eqeffort(&["repair", "--config", &cfg, "--lambda", "0"]);
    assert_eq!(code(&o), 2);
    assert!(stdout(&o).contains("repair ineffective"));

    let o = eqeffort(&["repair", "--config", &cfg, "--lambda", "-1"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn repairing_fair_data_changes_little() {
    let dir = TempDir::new().unwrap();
    let cfg = synthetic(dir.path(), "fair.toml", 0.0);
    let o = eqeffort(&["repair", "--config", &cfg]);
    assert_eq!(code(&o), 0);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out-fair.toml/repair-manifest.json")).unwrap()).unwrap();
    // sampling noise only: on the order of the number of cells
    assert!(manifest["utility_loss"].as_f64().unwrap() < 200.0);
}

#[test]
fn report_merges_and_validates() {
    let dir = TempDir::new().unwrap();
    let cfg = synthetic(dir.path(), "planted.toml", 0.15);
    eqeffort(&["audit", "--config", &cfg]);
    let out = dir.path().join("out-planted.toml");
    let file = |name: &str| out.join(name).to_str().unwrap().to_string();

    let o = eqeffort(&["report", &file("scm-system.json")]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).lines().next().unwrap().contains("level: system"));
    assert!(stdout(&o).contains("M SCM") && !stdout(&o).contains("Weighting"));

    let merged = dir.path().join("merged");
    let o = eqeffort(&["report", &file("weighting-system.json"), &file("regression-system.json"), &file("scm-system.json"), "--out", merged.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read_to_string(merged.join("comparison.txt")).unwrap(), fs::read_to_string(out.join("comparison.txt")).unwrap());

    eqeffort(&["audit", "--config", &cfg, "--backend", "scm", "--level", "group:x=0"]);
    let o = eqeffort(&["report", &file("scm-system.json"), &file("scm-group-x-0.json")]);
    assert_eq!(code(&o), 1);

    fs::write(out.join("broken.json"), "{\"backend\": 3}").unwrap();
    let o = eqeffort(&["report", &file("scm-system.json"), &file("broken.json")]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("broken.json"));
}
