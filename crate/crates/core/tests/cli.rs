use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_logsp");

fn logsp(args: &[&str], dir: &Path) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(dir)
        .env("LOGSP_WORKERS", "2")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn small_config(name: &str) -> String {
    format!(
        r#"schema_version = 1
name = "{name}"
checks = ["conservation", "apriori_bound", "log_moment_growth"]

[model]
dimension = 1
lambda = -1.0
eta = 0.0
p = 3.0

[grid]
half_width = 24.0
points = 256

[datum]
kind = "gaussian"
width = 1.0
amplitude = 1.0

[sim]
dt = 0.01
t_end = 0.5
output_stride = 5
"#
    )
}

#[test]
fn missing_config_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = logsp(&["run", "does-not-exist.toml"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("does-not-exist.toml"));
}

#[test]
fn malformed_config_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), "schema_version = 1\nname = [").unwrap();
    assert_eq!(logsp(&["run", "bad.toml"], dir.path()).status.code(), Some(1));
    let wrong_version = small_config("v").replace("schema_version = 1", "schema_version = 7");
    fs::write(dir.path().join("v.toml"), wrong_version).unwrap();
    assert_eq!(logsp(&["run", "v.toml"], dir.path()).status.code(), Some(1));
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(logsp(&["frobnicate"], dir.path()).status.code(), Some(1));
    assert_eq!(logsp(&["run"], dir.path()).status.code(), Some(1));
    assert_eq!(logsp(&["--help"], dir.path()).status.code(), Some(0));
}

#[test]
fn bounded_run_exits_zero_and_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("small.toml"), small_config("small")).unwrap();
    let o = logsp(&["run", "small.toml", "--out", "out"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let run = dir.path().join("out/small");
    let csv = fs::read_to_string(run.join("observables.csv")).unwrap();
    assert!(csv.starts_with("t,mass,kinetic,hartree,power,total_energy,log_moment,h12_moment,sigma_moment,grad_norm\n"));
    assert_eq!(csv.lines().count(), 1 + 1 + 10);
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["outcome"], "bounded");
    assert_eq!(summary["all_checks_passed"], true);
    assert!(summary["timing"]["wall_seconds"].is_number());
    assert!(run.join("plot.py").exists());
}

#[test]
fn identical_configs_give_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("d.toml"), small_config("d")).unwrap();
    logsp(&["run", "d.toml", "--out", "a"], dir.path());
    logsp(&["run", "d.toml", "--out", "b"], dir.path());
    let a = fs::read(dir.path().join("a/d/observables.csv")).unwrap();
    let b = fs::read(dir.path().join("b/d/observables.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn failed_check_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let text = small_config("strict") + "\n[tolerances]\nenergy_drift = 1e-30\nmass_drift = 1e-30\n";
    fs::write(dir.path().join("strict.toml"), text).unwrap();
    let o = logsp(&["run", "strict.toml"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAILED"));
}

#[test]
fn supercritical_focusing_preset_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = logsp(&["run", "--preset", "focusing-1d-supercritical-large"], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("focusing-1d-supercritical-large/summary.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(summary["outcome"], "suspected_blowup");
    assert!(summary["halted_at"].as_f64().unwrap() < 1.0);
}

#[test]
fn presets_list_and_show_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let o = logsp(&["presets", "list"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let listing = stdout(&o);
    for name in ["defocusing-2d", "focusing-1d-supercritical-large", "picard-smoke-1d", "phase-1d"] {
        assert!(listing.contains(name), "{name} missing");
    }
    let shown = logsp(&["presets", "show", "hartree-1d"], dir.path());
    let text = stdout(&shown);
    let edited = text
        .replace("t_end = 5.0", "t_end = 0.1")
        .replace("points = 512", "points = 256");
    fs::write(dir.path().join("h.toml"), edited).unwrap();
    assert_eq!(logsp(&["run", "h.toml"], dir.path()).status.code(), Some(0));
    assert_eq!(logsp(&["presets", "show", "nope"], dir.path()).status.code(), Some(1));
}

#[test]
fn verify_kernels_reports_json() {
    let dir = tempfile::tempdir().unwrap();
    let o = logsp(&["verify-kernels"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["passed"], true);
    assert!(report["k_bound"]["sampled_sup_far"].as_f64().unwrap() <= 1.5493);
    assert!(report["one_dimensional"]["sampled_sup"].as_f64().unwrap() <= 1.0 + 1e-12);

    let o = logsp(&["verify-kernels", "--p", "4"], dir.path());
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(report["k_bound"]["lp_norm_near"].as_f64().unwrap().is_finite());

    let o = logsp(&["verify-kernels", "--eta", "2"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("eta"));
}

#[test]
fn sweep_writes_phase_table() {
    let dir = tempfile::tempdir().unwrap();
    let base = small_config("base")
        .replace("[model]", "[base.model]")
        .replace("[grid]", "[base.grid]")
        .replace("[datum]", "[base.datum]")
        .replace("[sim]", "[base.sim]")
        .replace("schema_version = 1\nname = \"base\"\n", "schema_version = 1\nname = \"base\"\nchecks = []\n")
        .replace("checks = [\"conservation\", \"apriori_bound\", \"log_moment_growth\"]\n", "");
    let text = format!(
        "schema_version = 1\nname = \"grid-sweep\"\n\n[axes]\neta = [1.0, -1.0]\namplitude = [0.2, 0.4]\n\n[base]\n{base}"
    );
    fs::write(dir.path().join("s.toml"), text).unwrap();
    let o = logsp(&["sweep", "s.toml"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(dir.path().join("grid-sweep/phase.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next().unwrap(), "lambda,eta,p,amplitude,outcome,max_grad_norm,final_energy_drift");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.contains(",bounded,")));
}

#[test]
fn empty_sweep_axes_run_the_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let body = small_config("b")
        .replace("schema_version = 1\nname = \"b\"\n", "")
        .replace("[model]", "[base.model]")
        .replace("[grid]", "[base.grid]")
        .replace("[datum]", "[base.datum]")
        .replace("[sim]", "[base.sim]");
    let text = format!("schema_version = 1\nname = \"single\"\n\n[axes]\n\n[base]\nschema_version = 1\nname = \"b\"\n{body}");
    fs::write(dir.path().join("s.toml"), text).unwrap();
    let o = logsp(&["sweep", "s.toml"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(dir.path().join("single/phase.csv")).unwrap();
    assert_eq!(table.lines().count(), 2);
}
