use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn shs(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shs")).current_dir(dir).env_remove("SHS_OUTPUT_DIR").args(args).output().unwrap()
}

const CONFIG: &str = r#"{
  "system": {"state_space": "ieee5_reference"},
  "channels": [
    {"measure": "1.delta", "rho": 0.99, "sigma": 0.01},
    {"measure": "2.delta", "rho": 0.995, "sigma": 0.01}
  ],
  "scenario_sigma_overrides": {"2": [0.0015], "3": [0.002]},
  "observer": {"tau": 0.6261, "poles": {"common": [-4.8, -3.6, -4.0, -4.4]}},
  "sim": {"e0": [2, 0, 1, 0], "k": 10, "replicas": 8, "seed": 5},
  "pole_scales": [1.0, 2.0]
}"#;

fn write_config(dir: &Path) -> String {
    let p = dir.join("run.json");
    fs::write(&p, CONFIG).unwrap();
    p.display().to_string()
}

#[test]
fn linearize_builtin_grid() {
    let d = tempfile::tempdir().unwrap();
    let out = shs(d.path(), &["--out", "o", "linearize", "--grid", "two_bus"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.path().join("o/linearization.json")).unwrap()).unwrap();
    let a10 = v["a"][1][0].as_f64().unwrap();
    assert!((a10 + 197.7372).abs() < 0.2);
    assert!(d.path().join("o/manifest.json").exists());
}

#[test]
fn analyze_and_design_write_reports() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path());
    let out = shs(d.path(), &["--out", "o", "analyze", "--config", &cfg]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.path().join("o/analysis.json")).unwrap()).unwrap();
    assert!(v["report"]["gamma_exact"].as_f64().unwrap() < 1.0);
    assert_eq!(v["tradeoff"].as_array().unwrap().len(), 2);
    let out = shs(d.path(), &["--out", "o", "design", "--config", &cfg]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.path().join("o/design.json")).unwrap()).unwrap();
    assert_eq!(v["scenarios"].as_array().unwrap().len(), 4);
}

#[test]
fn simulate_writes_csv_and_is_worker_independent() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path());
    let a = shs(d.path(), &["--out", "a", "--workers", "1", "simulate", "--config", &cfg, "--gnuplot"]);
    let b = shs(d.path(), &["--out", "b", "--workers", "3", "simulate", "--config", &cfg]);
    assert!(a.status.success() && b.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let ca = fs::read_to_string(d.path().join("a/trajectory_base.csv")).unwrap();
    let cb = fs::read_to_string(d.path().join("b/trajectory_base.csv")).unwrap();
    assert_eq!(ca, cb);
    let header = ca.lines().next().unwrap();
    assert_eq!(header, "k,t_seconds,mean_err_sq,var_err_sq,mean_e1,mean_e2,mean_e3,mean_e4");
    assert_eq!(ca.lines().count(), 12);
    assert!(d.path().join("a/plot.gp").exists());
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.path().join("a/manifest.json")).unwrap()).unwrap();
    assert_eq!(m["config"]["sim"]["seed"], 5);
}

#[test]
fn seed_flag_changes_the_run() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path());
    assert!(shs(d.path(), &["--out", "a", "simulate", "--config", &cfg]).status.success());
    assert!(shs(d.path(), &["--out", "b", "--seed", "6", "simulate", "--config", &cfg]).status.success());
    let ca = fs::read_to_string(d.path().join("a/trajectory_base.csv")).unwrap();
    let cb = fs::read_to_string(d.path().join("b/trajectory_base.csv")).unwrap();
    assert_ne!(ca, cb);
}

#[test]
fn output_dir_from_environment() {
    let d = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_shs"))
        .current_dir(d.path())
        .env("SHS_OUTPUT_DIR", "from-env")
        .args(["linearize", "--grid", "two_bus"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(d.path().join("from-env/linearization.json").exists());
}

#[test]
fn reproduce_passes_its_check() {
    let d = tempfile::tempdir().unwrap();
    let out = shs(d.path(), &["--out", "o", "reproduce", "fig4", "--replicas", "40"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{text}");
    assert!(text.contains("PASS"));
    assert!(d.path().join("o/fig4_baseline.csv").exists());
    assert!(d.path().join("o/fig4_aggressive.csv").exists());
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.path().join("o/fig4_manifest.json")).unwrap()).unwrap();
    assert_eq!(m["passed"], true);
}

#[test]
fn exit_codes_for_usage_and_model_errors() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(shs(d.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(shs(d.path(), &["reproduce", "fig9"]).status.code(), Some(1));
    assert_eq!(shs(d.path(), &["linearize", "--grid", "ieee118"]).status.code(), Some(1));
    assert_eq!(shs(d.path(), &["analyze", "--config", "missing.json"]).status.code(), Some(1));
    assert_eq!(shs(d.path(), &["--help"]).status.code(), Some(0));
    // frequency sensors alone cannot see the common angle: a model failure
    let cfg = CONFIG.replace("1.delta", "1.omega").replace("2.delta", "2.omega");
    fs::write(d.path().join("bad.json"), cfg).unwrap();
    let out = shs(d.path(), &["--out", "o", "analyze", "--config", "bad.json"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}
