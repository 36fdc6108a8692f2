use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn ttkoop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ttkoop")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = ttkoop(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn code(args: &[&str]) -> (i32, String) {
    let out = ttkoop(args);
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn eigenvalues(results: &Value) -> Vec<(f64, f64)> {
    results["eigenvalues"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| (v["re"].as_f64().unwrap(), v["im"].as_f64().unwrap()))
        .collect()
}

/// `count` Gaussians per coordinate with centers spread over `[lo, hi]`.
fn gaussian_basis(dir: &Path, name: &str, coords: usize, count: usize, lo: f64, hi: f64, s: f64) -> PathBuf {
    let funcs: Vec<Value> = (0..count)
        .map(|i| json!({"kind": "gaussian", "c": lo + (hi - lo) * i as f64 / (count - 1) as f64, "s": s}))
        .collect();
    let dims: Vec<Value> = (1..=coords).map(|k| json!({"coordinate": k, "functions": funcs})).collect();
    let path = dir.join(name);
    fs::write(&path, json!({ "dimensions": dims }).to_string()).unwrap();
    path
}

fn header(bytes: &[u8]) -> (u64, u64) {
    (u64::from_le_bytes(bytes[8..16].try_into().unwrap()), u64::from_le_bytes(bytes[16..24].try_into().unwrap()))
}

#[test]
fn generate_abc_writes_paired_records_and_sidecar() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("abc.traj");
    ok(&["generate", "abc", "--n-per-dim", "2", "--tau", "5", "--out", s(&out)]);
    let bytes = fs::read(&out).unwrap();
    assert_eq!(&bytes[..4], b"TTKD");
    assert_eq!(header(&bytes), (3, 8));
    let record = 24 + 8 * 3 * 8;
    assert_eq!(bytes.len(), 2 * record);
    assert_eq!(header(&bytes[record..]), (3, 8));
    let meta = read_json(&dir.path().join("abc.traj.json"));
    assert_eq!(meta["system"], "abc");
    assert_eq!(meta["snapshots"], 8);
    assert_eq!(meta["parameters"]["tau"], 5.0);
}

#[test]
fn same_seed_gives_identical_files() {
    let dir = TempDir::new().unwrap();
    let run = |name: &str, seed: &str| {
        let a = dir.path().join(format!("{name}.traj"));
        ok(&["generate", "double-well", "--frames", "500", "--seed", seed, "--out", s(&a)]);
        let b = dir.path().join(format!("{name}.csv"));
        ok(&["generate", "abc", "--n-per-dim", "3", "--sampling", "random", "--seed", seed, "--out", s(&b)]);
        (fs::read(a).unwrap(), fs::read(b).unwrap())
    };
    let first = run("a", "7");
    assert_eq!(first, run("b", "7"));
    assert_ne!(first.0, run("c", "8").0);
}

#[test]
fn zero_lag_gives_unit_eigenvalues() {
    let dir = TempDir::new().unwrap();
    let traj = dir.path().join("dw.traj");
    ok(&["generate", "double-well", "--frames", "2000", "--stride", "5", "--out", s(&traj)]);
    let basis = gaussian_basis(dir.path(), "b.json", 1, 6, -1.5, 1.5, 0.2);
    let res = dir.path().join("r.json");
    ok(&["edmd", "--traj", s(&traj), "--basis", s(&basis), "--lag", "0", "--out", s(&res)]);
    let vals = eigenvalues(&read_json(&res));
    assert!(!vals.is_empty());
    for (re, im) in vals {
        assert!((re - 1.0).abs() < 1e-10 && im.abs() < 1e-10, "{re} {im}");
    }
}

#[test]
fn exact_and_streamed_agree() {
    let dir = TempDir::new().unwrap();
    let traj = dir.path().join("abc.traj");
    ok(&["generate", "abc", "--n-per-dim", "4", "--tau", "0.5", "--out", s(&traj)]);
    let basis = gaussian_basis(dir.path(), "b.json", 3, 3, 0.0, 2.0 * std::f64::consts::PI, 1.0);
    let mut spectra = Vec::new();
    for method in ["exact", "streamed"] {
        let res = dir.path().join(format!("{method}.json"));
        ok(&["edmd", "--traj", s(&traj), "--basis", s(&basis), "--eps", "0", "--method", method, "--out", s(&res)]);
        let doc = read_json(&res);
        assert_eq!(doc["method"], method);
        spectra.push(eigenvalues(&doc));
    }
    assert_eq!(spectra[0].len(), spectra[1].len());
    for (a, b) in spectra[0].iter().zip(&spectra[1]) {
        assert!((a.0 - b.0).abs() < 1e-8 && (a.1 - b.1).abs() < 1e-8, "{a:?} vs {b:?}");
    }
}

#[test]
fn cca_on_identical_data_gives_unit_correlations() {
    let dir = TempDir::new().unwrap();
    let traj = dir.path().join("same.traj");
    ok(&["generate", "abc", "--n-per-dim", "4", "--tau", "0", "--out", s(&traj)]);
    let basis = gaussian_basis(dir.path(), "b.json", 3, 3, 0.0, 2.0 * std::f64::consts::PI, 1.0);
    let res = dir.path().join("r.json");
    let grid = dir.path().join("grid.csv");
    let phi = dir.path().join("phi.csv");
    ok(&[
        "cca", "--traj", s(&traj), "--basis", s(&basis), "--out", s(&res), "--grid-eval", s(&grid), "--phi", s(&phi),
    ]);
    let doc = read_json(&res);
    let vals = eigenvalues(&doc);
    for (re, _) in &vals {
        assert!((re - 1.0).abs() < 1e-8, "{re}");
    }
    assert_eq!(doc["singular_values"].as_array().unwrap().len(), vals.len());

    let phi_rows: Vec<Vec<f64>> = fs::read_to_string(&phi)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(phi_rows.len(), vals.len());
    assert!(phi_rows.iter().all(|r| r.len() == 64));

    let text = fs::read_to_string(&grid).unwrap();
    let mut lines = text.lines();
    let head: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(&head[..4], &["x1", "x2", "x3", "phi1"]);
    assert_eq!(head.len(), 3 + vals.len());
    assert_eq!(lines.count(), 64);
}

#[test]
fn eps_sweep_ranks_do_not_grow() {
    let dir = TempDir::new().unwrap();
    let traj = dir.path().join("abc.traj");
    ok(&["generate", "abc", "--n-per-dim", "5", "--tau", "1", "--out", s(&traj)]);
    let basis = gaussian_basis(dir.path(), "b.json", 3, 4, 0.0, 2.0 * std::f64::consts::PI, 1.0);
    let mut previous: Option<Vec<u64>> = None;
    for eps in ["1e-12", "1e-6", "1e-3", "1e-1"] {
        let res = dir.path().join(format!("r{eps}.json"));
        ok(&["cca", "--traj", s(&traj), "--basis", s(&basis), "--eps", eps, "--out", s(&res)]);
        let doc = read_json(&res);
        assert_eq!(doc["eps"].as_f64().unwrap(), eps.parse::<f64>().unwrap());
        let ranks: Vec<u64> = doc["ranks"].as_array().unwrap().iter().map(|r| r.as_u64().unwrap()).collect();
        if let Some(prev) = &previous {
            assert!(ranks.iter().zip(prev).all(|(r, p)| r <= p), "{prev:?} -> {ranks:?}");
        }
        previous = Some(ranks);
    }
}

#[test]
fn double_well_timescale_is_lag_independent() {
    let dir = TempDir::new().unwrap();
    let traj = dir.path().join("dw.traj");
    ok(&["generate", "double-well", "--frames", "100000", "--stride", "10", "--seed", "1", "--out", s(&traj)]);
    let basis = gaussian_basis(dir.path(), "b.json", 1, 12, -2.0, 2.0, 0.05);
    let t2 = |lag: &str| {
        let res = dir.path().join(format!("lag{lag}.json"));
        ok(&["edmd", "--traj", s(&traj), "--basis", s(&basis), "--lag", lag, "--symmetrize", "--q", "3", "--out", s(&res)]);
        let doc = read_json(&res);
        // frame time dt·stride comes from the sidecar
        let expected_tau = lag.parse::<f64>().unwrap() * 1e-3 * 10.0;
        assert!((doc["tau_phys"].as_f64().unwrap() - expected_tau).abs() < 1e-12);
        assert_eq!(doc["implied_timescales"][1]["status"], "finite");
        doc["implied_timescales"][1]["value"].as_f64().unwrap()
    };
    let (a, b) = (t2("10"), t2("20"));
    assert!((a - b).abs() / a < 0.1, "t2 {a} vs {b}");
}

#[test]
fn timescales_are_recomputed_for_a_new_lag_time() {
    let dir = TempDir::new().unwrap();
    let traj = dir.path().join("dw.csv");
    ok(&["generate", "double-well", "--frames", "5000", "--stride", "10", "--out", s(&traj)]);
    let basis = gaussian_basis(dir.path(), "b.json", 1, 5, -1.5, 1.5, 0.25);
    let res = dir.path().join("r.json");
    ok(&["edmd", "--traj", s(&traj), "--basis", s(&basis), "--lag", "5", "--tau-phys", "1", "--out", s(&res)]);
    let scaled = dir.path().join("s.json");
    ok(&["timescales", "--results", s(&res), "--tau", "3", "--out", s(&scaled)]);
    let (before, after) = (read_json(&res), read_json(&scaled));
    assert_eq!(after["tau_phys"], 3.0);
    assert_eq!(after["config"]["tau_phys"], 3.0);
    for (x, y) in before["implied_timescales"].as_array().unwrap().iter().zip(after["implied_timescales"].as_array().unwrap()) {
        assert_eq!(x["status"], y["status"]);
        if let (Some(x), Some(y)) = (x["value"].as_f64(), y["value"].as_f64()) {
            assert!((3.0 * x - y).abs() <= 1e-12 * y.abs());
        }
    }
}

#[test]
fn config_file_and_flags_combine() {
    let dir = TempDir::new().unwrap();
    let traj = dir.path().join("dw.traj");
    ok(&["generate", "double-well", "--frames", "3000", "--out", s(&traj)]);
    let basis = gaussian_basis(dir.path(), "b.json", 1, 5, -1.5, 1.5, 0.25);
    let res = dir.path().join("r.json");
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, json!({"traj": traj, "basis": basis, "lag": 3, "eps": 1e-6, "out": res, "q": 2}).to_string())
        .unwrap();
    ok(&["edmd", "--config", s(&cfg), "--eps", "1e-4"]);
    let doc = read_json(&res);
    assert_eq!(doc["config"]["lag"], 3);
    assert_eq!(doc["config"]["eps"], 1e-4);
    assert_eq!(eigenvalues(&doc).len(), 2);
}

#[test]
fn exit_codes_follow_failure_class() {
    let dir = TempDir::new().unwrap();
    let traj = dir.path().join("dw.traj");
    ok(&["generate", "double-well", "--frames", "200", "--out", s(&traj)]);
    let basis = gaussian_basis(dir.path(), "b.json", 1, 3, -1.0, 1.0, 0.25);
    let res = dir.path().join("r.json");

    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, json!({"traj": traj, "basis": basis, "lag": 1, "out": res, "epsilon": 0.1}).to_string()).unwrap();
    let (c, msg) = code(&["edmd", "--config", s(&cfg)]);
    assert_eq!(c, 2);
    assert!(msg.contains("epsilon"), "{msg}");

    assert_eq!(code(&["edmd", "--traj", s(&traj), "--basis", s(&basis), "--lag", "200", "--out", s(&res)]).0, 2);
    assert_eq!(code(&["edmd", "--traj", s(&traj), "--basis", s(&basis), "--out", s(&res)]).0, 2);
    assert_eq!(code(&["edmd", "--traj", s(&traj), "--basis", s(&basis), "--lag", "1", "--eps", "-1", "--out", s(&res)]).0, 2);
    assert_eq!(code(&["generate", "abc", "--n-per-dim", "1", "--out", s(&dir.path().join("x.traj"))]).0, 2);
    assert_eq!(code(&["edmd", "--bogus"]).0, 2);

    let zero = dir.path().join("zero.json");
    fs::write(&zero, r#"{"dimensions":[{"coordinate":1,"functions":[{"kind":"gaussian","c":1000,"s":0.001}]}]}"#).unwrap();
    assert_eq!(code(&["edmd", "--traj", s(&traj), "--basis", s(&zero), "--lag", "1", "--out", s(&res)]).0, 3);

    let missing = dir.path().join("missing.traj");
    assert_eq!(code(&["edmd", "--traj", s(&missing), "--basis", s(&basis), "--lag", "1", "--out", s(&res)]).0, 4);
    let unwritable = dir.path().join("no/such/dir/x.traj");
    assert_eq!(code(&["generate", "double-well", "--frames", "10", "--out", s(&unwritable)]).0, 4);
}

#[test]
fn thread_cap_is_validated() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("a.traj");
    let run = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_ttkoop"))
            .args(["generate", "abc", "--n-per-dim", "2", "--out", s(&out)])
            .env("TTK_THREADS", threads)
            .output()
            .unwrap()
            .status
            .code()
            .unwrap()
    };
    assert_eq!(run("1"), 0);
    assert_eq!(run("0"), 2);
    assert_eq!(run("many"), 2);
}
