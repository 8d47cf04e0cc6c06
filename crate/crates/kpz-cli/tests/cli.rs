use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const SMALL: &str = "\
d = 1
L = 16
dt = 0.1
T = 1.0
nu0 = 1.0
D0 = 1.0
lambda = 0.2
seed = 7
";

fn kpz(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kpz")).args(args).env_remove("KPZ_OUT_DIR").output().expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("run.toml");
    std::fs::write(&p, text).unwrap();
    p
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

/// (path, sha256) of every output listed in a manifest.
fn digests(out: &Path) -> Vec<(String, String)> {
    let m = read_json(&out.join("manifest.json"));
    m["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|o| (o["path"].as_str().unwrap().to_string(), o["sha256"].as_str().unwrap().to_string()))
        .collect()
}

fn run_ok(args: &[&str]) -> Output {
    let o = kpz(args);
    assert!(o.status.success(), "kpz {args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
    o
}

fn header(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn cluster_selftest_needs_no_config() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("st");
    let o = run_ok(&["cluster-selftest", "--out", out.to_str().unwrap()]);
    let line: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(line["status"], "ok");
    assert!(out.join("selftest.json").exists());
    assert!(out.join("forests.json").exists());
    assert!(!out.join("error.json").exists());
}

#[test]
fn missing_key_is_a_schema_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &SMALL.replace("nu0 = 1.0\n", ""));
    let out = tmp.path().join("o");
    let o = kpz(&["simulate", "-c", cfg.to_str().unwrap(), "-o", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let rec = read_json(&out.join("error.json"));
    assert_eq!(rec["kind"], "schema");
    assert_eq!(rec["keys"], serde_json::json!(["nu0"]));
}

#[test]
fn unknown_key_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &format!("{SMALL}lamda = 0.3\n"));
    let out = tmp.path().join("o");
    let o = kpz(&["renorm", "-c", cfg.to_str().unwrap(), "-o", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let rec = read_json(&out.join("error.json"));
    assert!(rec["keys"].as_array().unwrap().iter().any(|k| k == "lamda"), "{rec}");
}

#[test]
fn replicas_flag_rejected_where_unused() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("o");
    let o = kpz(&["simulate", "-c", cfg.to_str().unwrap(), "-o", out.to_str().unwrap(), "--replicas", "4"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn overrides_land_in_the_snapshot() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("o");
    run_ok(&[
        "simulate",
        "-c",
        cfg.to_str().unwrap(),
        "-o",
        out.to_str().unwrap(),
        "--set",
        "lambda=0.5",
        "--set",
        "simulate.every=5",
    ]);
    let m = read_json(&out.join("manifest.json"));
    assert_eq!(m["config"]["lambda"], 0.5);
    assert_eq!(m["config"]["simulate"]["every"], 5);
    // 10 steps every 5, plus the initial snapshot
    let rows = std::fs::read_to_string(out.join("snapshots.csv")).unwrap().lines().count();
    assert_eq!(rows, 1 + 3);
}

#[test]
fn reruns_threads_and_replay_are_bitwise_identical() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        &format!("{}\n[scaling]\nepsilons = [1.0, 0.25]\nreplicas = 24\n", SMALL.replace("T = 1.0", "T = 8.0")),
    );
    let cfg = cfg.to_str().unwrap();
    let dirs: Vec<PathBuf> = ["a", "b", "c"].iter().map(|s| tmp.path().join(s)).collect();
    run_ok(&["scaling", "-c", cfg, "-o", dirs[0].to_str().unwrap(), "--threads", "1"]);
    run_ok(&["scaling", "-c", cfg, "-o", dirs[1].to_str().unwrap(), "--threads", "2"]);
    let manifest = dirs[0].join("manifest.json");
    run_ok(&["scaling", "-c", manifest.to_str().unwrap(), "-o", dirs[2].to_str().unwrap()]);
    let reference = digests(&dirs[0]);
    assert!(!reference.is_empty());
    assert_eq!(digests(&dirs[1]), reference);
    assert_eq!(digests(&dirs[2]), reference);
}

#[test]
fn seed_flag_changes_outputs() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let cfg = cfg.to_str().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run_ok(&["simulate", "-c", cfg, "-o", a.to_str().unwrap()]);
    run_ok(&["simulate", "-c", cfg, "-o", b.to_str().unwrap(), "--seed", "8"]);
    assert_ne!(digests(&a), digests(&b));
    assert_eq!(read_json(&b.join("manifest.json"))["seed"], 8);
}

#[test]
fn csv_headers() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        &format!(
            "{}\n[polymer]\npaths = 200\nsites = [0, 3]\n\n[scaling]\nepsilons = [1.0, 0.25]\nreplicas = 8\n",
            SMALL.replace("T = 1.0", "T = 8.0")
        ),
    );
    let cfg = cfg.to_str().unwrap();
    let p = tmp.path().join("p");
    run_ok(&["polymer", "-c", cfg, "-o", p.to_str().unwrap()]);
    assert_eq!(header(&p.join("polymer.csv")), "T,a,value,stderr,n_paths");
    let rows = std::fs::read_to_string(p.join("polymer.csv")).unwrap().lines().count();
    assert_eq!(rows, 1 + 2);

    let s = tmp.path().join("s");
    run_ok(&["scaling", "-c", cfg, "-o", s.to_str().unwrap()]);
    let h = header(&s.join("scaling.csv"));
    assert!(h.starts_with("epsilon,t1,x1_1,t2,x2_1,"), "{h}");
    assert!(h.ends_with("estimate,stderr,replicas"), "{h}");
}

#[test]
fn powercount_passes_with_defaults() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("pc");
    run_ok(&["powercount", "-o", out.to_str().unwrap()]);
    let mut r = csv_rows(&out.join("powercount.csv"));
    let head = r.remove(0);
    assert_eq!(head, ["check", "j", "kappa", "measured", "bound", "pass"]);
    assert!(!r.is_empty());
    assert!(r.iter().all(|row| row[5] == "true"), "{r:?}");
}

fn csv_rows(p: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(p).unwrap().lines().map(|l| l.split(',').map(String::from).collect()).collect()
}

#[test]
fn out_dir_defaults_under_env_root() {
    let tmp = TempDir::new().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_kpz"))
        .arg("cluster-selftest")
        .env("KPZ_OUT_DIR", tmp.path())
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(tmp.path().join("cluster-selftest/manifest.json").exists());
}
