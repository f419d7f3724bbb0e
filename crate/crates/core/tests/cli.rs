use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_carnot-heat"));
    cmd.args(args).env_remove("CARNOT_HEAT_THREADS");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("spawn binary")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn write_config(dir: &TempDir, name: &str, text: &str) -> String {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

const SMALL_H1: &str = "problem.group = heisenberg:1\nproblem.cells = 8\nproblem.p = 2.5\n\
problem.beta = 3\nproblem.q = 2.5\nproblem.T = 0.05\nproblem.u0 = random\noutput.stride = 10\n";

#[test]
fn heat_solve_writes_trajectory() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("heat");
    let cfg = configs().join("heat_1d.conf");
    let o = run(&["solve", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let m = json(&out.join("manifest.json"));
    assert_eq!(m["schema_version"], 1);
    assert_eq!(m["termination"]["status"], "completed");
    let times = m["times"].as_array().unwrap();
    assert_eq!(times.len(), m["sup_norm"].as_array().unwrap().len());
    assert_eq!(times.len(), m["energy_jp"].as_array().unwrap().len());
    assert_eq!(m["spec"]["cells"][0], 128);
    let fields = m["fields"].as_array().unwrap();
    assert_eq!(fields.len(), times.len());
    let first = std::fs::read_to_string(out.join(fields[0].as_str().unwrap())).unwrap();
    let mut lines = first.lines();
    assert_eq!(lines.next(), Some("i1,value"));
    assert_eq!(first.lines().count(), 129);
    assert!(out.join("series.csv").exists());
}

#[test]
fn zero_initial_data_stays_zero() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "z.conf", &SMALL_H1.replace("random", "0"));
    let out = dir.path().join("z");
    let o = run(&["solve", "--config", &cfg, "--out", out.to_str().unwrap()], &[]);
    assert_eq!(code(&o), 0);
    let m = json(&out.join("manifest.json"));
    assert!(m["sup_norm"].as_array().unwrap().iter().all(|v| v.as_f64() == Some(0.0)));
}

#[test]
fn blow_up_exits_2_and_keeps_partial_output() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("b");
    let cfg = configs().join("blowup_1d.conf");
    let o = run(&["solve", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], &[]);
    assert_eq!(code(&o), 2);
    let m = json(&out.join("manifest.json"));
    assert_eq!(m["termination"]["status"], "blow-up");
}

#[test]
fn compare_exit_codes() {
    let dir = TempDir::new().unwrap();
    let cfg = configs().join("compare_1d.conf");
    let cfg = cfg.to_str().unwrap();
    let out = dir.path().join("c");
    let out = out.to_str().unwrap();
    let o = run(&["compare", "--config", cfg, "--out", out, "--scale", "1"], &[]);
    assert_eq!(code(&o), 0);
    let r = json(&Path::new(out).join("compare.json"));
    assert_eq!(r["max_violation"], 0.0);
    assert_eq!(r["schema_version"], 1);
    let o = run(&["compare", "--config", cfg, "--out", out, "--seed", "4"], &[]);
    assert_eq!(code(&o), 0);
    let r = json(&Path::new(out).join("compare.json"));
    assert_eq!(r["ordered"], true);
    let o = run(&["compare", "--config", cfg, "--out", out, "--scale", "1.5"], &[]);
    assert_eq!(code(&o), 1);
}

#[test]
fn barrier_rejects_bad_exponents() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "b.conf",
        "problem.group = heisenberg:1\nproblem.lower = 0, 0, -1\nproblem.upper = 1\n\
         problem.cells = 8\nproblem.p = 2\nproblem.q = 3\nproblem.beta = 2\n",
    );
    let o = run(&["barrier", "--config", &cfg, "--out", dir.path().to_str().unwrap()], &[]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("requires p ≤ q < β+1"));
}

#[test]
fn failed_identity_check_exits_3() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "v.conf", "verify.h = 0.5\nverify.samples = 1000\n");
    let out = dir.path().join("v");
    let o = run(&["verify-identities", "--config", &cfg, "--out", out.to_str().unwrap()], &[]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stdout));
    let r = json(&out.join("verify.json"));
    assert_eq!(r["schema_version"], 1);
}

#[test]
fn configuration_errors_exit_1() {
    let dir = TempDir::new().unwrap();
    let bad = write_config(&dir, "bad.conf", "problem.p = nope\n");
    let out = dir.path().to_str().unwrap();
    assert_eq!(code(&run(&["solve", "--config", &bad, "--out", out], &[])), 1);
    assert_eq!(code(&run(&["solve", "--config", "/nonexistent.conf", "--out", out], &[])), 1);
    assert_eq!(code(&run(&["solve", "--bogus"], &[])), 1);
    let good = write_config(&dir, "ok.conf", SMALL_H1);
    let o = run(&["solve", "--config", &good, "--out", out], &[("CARNOT_HEAT_THREADS", "zero")]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("CARNOT_HEAT_THREADS"));
}

#[test]
fn output_is_independent_of_thread_count() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "d.conf", SMALL_H1);
    let mut manifests = Vec::new();
    for threads in ["1", "3"] {
        let out = dir.path().join(format!("t{threads}"));
        let o = run(
            &["solve", "--config", &cfg, "--out", out.to_str().unwrap(), "--seed", "9"],
            &[("CARNOT_HEAT_THREADS", threads)],
        );
        assert_eq!(code(&o), 0);
        manifests.push(std::fs::read(out.join("manifest.json")).unwrap());
        let last = std::fs::read_dir(out.join("fields")).unwrap().count();
        assert!(last >= 2);
    }
    assert_eq!(manifests[0], manifests[1]);
}

#[test]
fn refine_doubles_the_cells() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "r.conf", SMALL_H1);
    let out = dir.path().join("r");
    let o = run(&["solve", "--config", &cfg, "--out", out.to_str().unwrap(), "--refine", "1"], &[]);
    assert_eq!(code(&o), 0);
    let m = json(&out.join("manifest.json"));
    assert_eq!(m["spec"]["cells"], serde_json::json!([16, 16, 16]));
    assert_eq!(m["config"]["refine"], 1);
}
