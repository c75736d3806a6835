use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(task: &str, config: &str, dir: &Path, extra: &[&str]) -> Output {
    let cfg = dir.join("run.toml");
    std::fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_kimura"))
        .arg(task)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .args(extra)
        .output()
        .unwrap()
}

fn summary(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("out/summary.json")).unwrap()).unwrap()
}

#[test]
fn check_rejects_non_clean_operator() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("check", "schema = \"1\"\noperator = \"remark-counterexample\"\n", dir.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    let s = summary(dir.path());
    assert_eq!(s["status"], "assumption_failed");
    assert_eq!(s["results"]["cleanness"]["status"], "violated");
    assert!(!s["results"]["cleanness"]["witnesses"].as_array().unwrap().is_empty());
}

#[test]
fn check_accepts_wright_fisher() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("check", "schema = \"1\"\noperator = \"wright-fisher(1, [0, 0])\"\n", dir.path(), &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(summary(dir.path())["results"]["cleanness"]["status"], "clean");
}

#[test]
fn missing_field_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "schema = \"1\"\noperator = \"wright-fisher(1, [0, 0])\"\np0 = [0.3]\nn_paths = 10\ndt = 1e-3\n";
    let out = run("decompose", cfg, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("`t`"), "{err}");
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("check", "schema = \"1\"\noperator = \"model1d(0)\"\nbogus = 1\n", dir.path(), &[]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
}

const DECOMPOSE: &str = "schema = \"1\"
operator = \"wright-fisher(1, [0, 0])\"
seed = 7
p0 = [0.3]
t = 1.0
dt = 1e-3
n_paths = 400
bins = 10
";

#[test]
fn decompose_writes_masses() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("decompose", DECOMPOSE, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(dir.path());
    assert_eq!(s["schema"], "1");
    assert_eq!(s["seed"], 7);
    let masses = s["results"]["masses"].as_object().unwrap();
    let total: f64 = masses.values().map(|p| p["estimate"].as_f64().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-12);
    assert!(masses.values().all(|p| p["stderr"].is_number()));
    assert!(dir.path().join("out/masses.csv").exists());
    assert!(dir.path().join("out/interior.csv").exists());
}

#[test]
fn outputs_do_not_depend_on_worker_count() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(run("decompose", DECOMPOSE, a.path(), &["--workers", "1"]).status.code(), Some(0));
    assert_eq!(run("decompose", DECOMPOSE, b.path(), &["--workers", "3"]).status.code(), Some(0));
    for f in ["masses.csv", "interior.csv"] {
        let x = std::fs::read(a.path().join("out").join(f)).unwrap();
        let y = std::fs::read(b.path().join("out").join(f)).unwrap();
        assert_eq!(x, y, "{f}");
    }
}

#[test]
fn barriers_pass_for_appendix_preset() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "schema = \"1\"\noperator = \"appendix-A(1, 1, 0, 0.5, 0.5)\"\ngrid = 12\n";
    let out = run("barriers", cfg, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(dir.path());
    for key in ["w2", "w2_fine", "w1", "w1_fine"] {
        assert_eq!(s["results"][key]["pass"], true, "{key}");
    }
}

#[test]
fn kernel_writes_series() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "schema = \"1\"\noperator = \"kimura1d(0, 0)\"\np0 = [0.3]\nhorizon = 0.2\ngrid = 100\npde_dt = 1e-3\nstore_every = 50\n";
    let out = run("kernel", cfg, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(dir.path());
    let surv = s["results"]["survival"].as_array().unwrap();
    assert!(surv.windows(2).all(|w| w[1].as_f64() <= w[0].as_f64()));
    assert!(dir.path().join("out/kernel.csv").exists());
}
