use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use qnet_core::compiler::{teleportation_script, ProtocolInstruction};
use qnet_core::quantum::{Circuit, Gate};
use serde_json::Value;
use tempfile::TempDir;

fn qnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qnet")).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.display().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn chsh_run_writes_results_and_manifest() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "chsh.json", r#"{"kind": "chsh", "params": {"rounds": 100000}}"#);
    let out = tmp.path().join("out");
    let o = qnet(&["run", "--config", &cfg, "--seed", "7", "--out-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = csv_rows(&out.join("results.csv"));
    let rate: f64 = rows[0][3].parse().unwrap();
    assert!((rate - 0.8536).abs() < 0.01, "{rate}");
    assert_eq!(csv_rows(&out.join("games.csv")).len(), 100_000);
    let m: Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 7);
    assert_eq!(m["config_sha256"].as_str().unwrap().len(), 64);
    assert!(m["files"]["results.csv"].is_string());
    assert!(fs::read_to_string(out.join("run.log")).unwrap().contains("win_rate"));
}

#[test]
fn equal_seeds_give_identical_files() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "k.json", r#"{"kind": "keypool", "seed": 3, "end_time": "0.4s", "trace": true}"#);
    let mut dirs = Vec::new();
    for run in ["a", "b"] {
        let out = tmp.path().join(run);
        let o = qnet(&["run", "--config", &cfg, "--out-dir", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        dirs.push(out);
    }
    for name in ["requests.csv", "pools.csv", "trace.txt"] {
        let a = fs::read(dirs[0].join(name)).unwrap();
        assert_eq!(a, fs::read(dirs[1].join(name)).unwrap(), "{name}");
    }
    let manifest = |d: &Path| -> Value { serde_json::from_str(&fs::read_to_string(d.join("manifest.json")).unwrap()).unwrap() };
    assert_eq!(manifest(&dirs[0])["files"], manifest(&dirs[1])["files"]);
}

#[test]
fn keypool_capacity_sweep_rows() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "k.json",
        r#"{"kind": "keypool", "end_time": "0.3s", "params": {"capacities": [20, 30, 40, 50, 60, 70, 80], "replications": 2}}"#,
    );
    let out = tmp.path().join("out");
    let o = qnet(&["run", "--config", &cfg, "--out-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(out.join("capacity_sweep.csv")).unwrap();
    assert!(text.starts_with("capacity,processed_requests\n"));
    let caps: Vec<String> = csv_rows(&out.join("capacity_sweep.csv")).into_iter().map(|r| r[0].clone()).collect();
    assert_eq!(caps, ["20", "30", "40", "50", "60", "70", "80"]);
}

#[test]
fn config_errors_exit_2() {
    let tmp = TempDir::new().unwrap();
    let missing = tmp.path().join("nowhere").join("topo.json");
    let cfg = write(tmp.path(), "c.json", &format!(r#"{{"kind": "bb84", "topology": "{}"}}"#, missing.display()));
    let o = qnet(&["run", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains(&missing.display().to_string()), "{}", stderr(&o));

    let o = qnet(&["run", "--config", tmp.path().join("absent.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    let cfg = write(tmp.path(), "bad.json", r#"{"kind": "chsh", "params": {"rounds": "many"}}"#);
    assert_eq!(qnet(&["run", "--config", &cfg]).status.code(), Some(2));

    let cfg = write(tmp.path(), "ok.json", r#"{"kind": "chsh"}"#);
    assert_eq!(qnet(&["run", "--config", &cfg, "--end-time", "soon"]).status.code(), Some(2));
    assert_eq!(qnet(&["run"]).status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_1() {
    let tmp = TempDir::new().unwrap();
    let topo = write(
        tmp.path(),
        "topo.json",
        r#"{"nodes": [{"name": "Alice"}, {"name": "Bob"}], "links": []}"#,
    );
    let cfg = write(tmp.path(), "c.json", &format!(r#"{{"kind": "bb84", "topology": "{topo}", "params": {{"pulses": 10}}}}"#));
    let o = qnet(&["run", "--config", &cfg, "--out-dir", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn compile_teleportation_deferred() {
    let tmp = TempDir::new().unwrap();
    let script = write(tmp.path(), "s.json", &serde_json::to_string(&teleportation_script(0.4)).unwrap());
    let out = tmp.path().join("c.json");
    let o = qnet(&["compile", "--script", &script, "--defer", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let c = Circuit::from_json(&fs::read_to_string(&out).unwrap()).unwrap();
    assert!(c.is_standard());
    assert!(c.instructions.iter().all(|i| i.cond.is_none()));

    let o = qnet(&["compile", "--script", &script, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let c = Circuit::from_json(&fs::read_to_string(&out).unwrap()).unwrap();
    assert!(!c.is_standard());
}

#[test]
fn compile_edge_cases() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("c.json");
    let empty = write(tmp.path(), "e.json", "[]");
    let o = qnet(&["compile", "--script", &empty, "--defer", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(Circuit::from_json(&fs::read_to_string(&out).unwrap()).unwrap().instructions.is_empty());

    let early = vec![
        ProtocolInstruction::local("Alice", Gate::H, 0),
        ProtocolInstruction::conditioned("Alice", Gate::X, 1, ("Alice", 0)),
        ProtocolInstruction::local("Alice", Gate::Measure, 0),
    ];
    let bad = write(tmp.path(), "b.json", &serde_json::to_string(&early).unwrap());
    let o = qnet(&["compile", "--script", &bad, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("instruction 1"), "{}", stderr(&o));

    let junk = write(tmp.path(), "j.json", r#"[{"kind": "teleport"}]"#);
    assert_eq!(qnet(&["compile", "--script", &junk, "--out", out.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn end_time_sweep() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "k.json", r#"{"kind": "keypool", "seed": 11}"#);
    let out = tmp.path().join("s");
    let o = qnet(&[
        "sweep",
        "--config",
        &cfg,
        "--param",
        "end_time",
        "--values",
        "0.6,0.1,0.2,0.3,0.4,0.5",
        "--replications",
        "5",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = csv_rows(&out.join("sweep.csv"));
    assert_eq!(rows.len(), 6);
    let values: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert_eq!(values, [0.1, 0.2, 0.3, 0.4, 0.5, 0.6]);
    assert!(rows.iter().all(|r| r[2] == "5"));
}

#[test]
fn single_value_sweep_matches_run() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "c.json", r#"{"kind": "chsh", "seed": 9, "params": {"rounds": 500}}"#);
    let run = tmp.path().join("r");
    assert_eq!(qnet(&["run", "--config", &cfg, "--out-dir", run.to_str().unwrap()]).status.code(), Some(0));
    let log = fs::read_to_string(run.join("run.log")).unwrap();
    let metric: f64 = log.lines().last().unwrap().rsplit(' ').next().unwrap().parse().unwrap();
    let sw = tmp.path().join("s");
    let o = qnet(&["sweep", "--config", &cfg, "--param", "params.rounds", "--values", "500", "--out-dir", sw.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = csv_rows(&sw.join("sweep.csv"));
    assert_eq!(rows[0][3].parse::<f64>().unwrap(), metric);
    assert_eq!(rows[0][4], "0");
}

#[test]
fn sweep_usage_errors() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "c.json", r#"{"kind": "chsh", "params": {"rounds": 10}}"#);
    let dir = tmp.path().join("s");
    let base = ["sweep", "--config", &cfg, "--out-dir", dir.to_str().unwrap(), "--param"];
    let run = |extra: &[&str]| {
        let mut args: Vec<&str> = base.to_vec();
        args.extend_from_slice(extra);
        qnet(&args).status.code()
    };
    assert_eq!(run(&["params.rounds", "--values", "10", "--replications", "0"]), Some(2));
    assert_eq!(run(&["params.rounds", "--values", "ten"]), Some(2));
    assert_eq!(run(&["params.missing", "--values", "10"]), Some(2));
}
