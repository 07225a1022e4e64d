use std::path::Path;
use std::process::{Command, Output};

fn sphereflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sphereflow"))
        .args(args)
        .env("SPHEREFLOW_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("scenario.toml");
    std::fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

const SMALL: &str = r#"
schema_version = 1
name = "small"
seed = 3
[kernel]
kind = "simple_attention"
beta = 1.0
[init]
kind = "uniform"
d = 3
n = 16
[integrator]
dt = 0.05
t_end = 1.0
[observe]
interval = 0.25
reference = { kind = "limit" }
monitors = ["dissipation_floor"]
"#;

#[test]
fn missing_seed_is_a_config_error_naming_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &SMALL.replace("seed = 3\n", ""));
    let out = sphereflow(&["simulate", &cfg, "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
}

#[test]
fn unknown_key_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &format!("{SMALL}\n[output]\nformat = \"csv\"\n"));
    let out = sphereflow(&["simulate", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("format"));
}

#[test]
fn wrong_schema_version_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &SMALL.replace("schema_version = 1", "schema_version = 9"));
    assert_eq!(sphereflow(&["simulate", &cfg]).status.code(), Some(2));
}

#[test]
fn simulate_writes_all_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let dir = tmp.path().join("out");
    let out = sphereflow(&["simulate", &cfg, "--out", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for ext in ["csv", "jsonl", "verdicts.jsonl", "summary.json"] {
        let p = dir.join(format!("small.{ext}"));
        assert!(p.exists(), "missing {}", p.display());
    }
    let csv = std::fs::read_to_string(dir.join("small.csv")).unwrap();
    // metadata comment, header, then ticks at t = 0, 0.25, ..., 1
    assert!(csv.starts_with("# {"));
    assert_eq!(csv.lines().count(), 7);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("small.summary.json")).unwrap()).unwrap();
    assert_eq!(summary["meta"]["seed"], 3);
    assert_eq!(summary["verdicts"]["failed"], 0);
}

#[test]
fn unknown_names_exit_with_usage_error() {
    assert_eq!(sphereflow(&["reproduce", "example-9-9"]).status.code(), Some(2));
    assert_eq!(sphereflow(&["check", "everything"]).status.code(), Some(2));
}

#[test]
fn example_2_1_reproduction_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = sphereflow(&["reproduce", "example-2-1", "--out", tmp.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(tmp.path().join("example-2-1.report.json").exists());
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for entry in std::fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        sphereflow_cli::config::ScenarioConfig::load(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
    }
}
