use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"{
  "n_particles": 48,
  "replicas": 2,
  "T": 0.2,
  "s0": 0.05,
  "dt_fine": 1e-3,
  "dt_overdamped": 1e-2,
  "eps_grid": [0.2, 0.1, 0.05],
  "checkpoint_times": [0.1, 0.2],
  "trajectory_interval": 0.02,
  "holder_lags": [0.02, 0.04, 0.08],
  "lemma.n_samples": 5000,
  "validate.n_samples": 100
}"#;

fn mvsk(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mvsk"))
        .args(args)
        .current_dir(dir)
        .env_remove("MVSK_THREADS")
        .output()
        .unwrap()
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("small.json");
    fs::write(&path, SMALL).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn missing_config_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = mvsk(&["converge", "--config", "does-not-exist.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("mvsk: "));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(&path, r#"{"n_particle": 10}"#).unwrap();
    let out = mvsk(&["converge", "--config", path.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn converge_writes_documented_header() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = mvsk(&["converge", "--config", &cfg, "--out", "res"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("res/convergence.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("epsilon,replica,time,variant,w2,n_particles,seed"));
    // 3 eps x 2 replicas x 2 checkpoints x 3 variants
    assert_eq!(lines.count(), 36);
    assert!(dir.path().join("res/convergence_summary.json").exists());
}

#[test]
fn thread_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    for cmd in ["ablate", "momentum", "lemmas"] {
        for threads in ["1", "8"] {
            let o = format!("t{threads}");
            let out = mvsk(&[cmd, "--config", &cfg, "--threads", threads, "--out", &o], dir.path());
            assert!(out.status.success(), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
        }
    }
    let names: Vec<_> = fs::read_dir(dir.path().join("t1")).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(names.len(), 6);
    for name in names {
        let a = fs::read(dir.path().join("t1").join(&name)).unwrap();
        let b = fs::read(dir.path().join("t8").join(&name)).unwrap();
        assert!(a == b, "{name:?} differs between thread counts");
    }
}

#[test]
fn json_format_and_seed_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = mvsk(&["simulate", "--config", &cfg, "--format", "json", "--seed", "7"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let body = fs::read_to_string(dir.path().join("fields.json")).unwrap();
    assert!(body.trim_start().starts_with('['));
    let summary = fs::read_to_string(dir.path().join("fields_summary.json")).unwrap();
    assert!(summary.contains("\"root_seed\": 7"));
}

#[test]
fn validate_accepts_default_preset() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = mvsk(&["validate", "--config", &cfg], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("validation.csv")).unwrap();
    assert!(csv.starts_with("assumption,metric,observed,limit,passed\n"));
}
