use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn gridcast(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gridcast"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn fig1(dir: &Path) -> String {
    let path = dir.join("fig1.json");
    let out = gridcast(&["fig1", "--out", path.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    path.to_str().unwrap().to_string()
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(code(&gridcast(&["--help"])), 0);
    assert_eq!(code(&gridcast(&["--version"])), 0);
    assert_eq!(code(&gridcast(&["solve", "--help"])), 0);
}

#[test]
fn bad_usage_exits_one() {
    assert_eq!(code(&gridcast(&[])), 1);
    assert_eq!(code(&gridcast(&["frobnicate"])), 1);
    assert_eq!(code(&gridcast(&["gen", "--out", "x", "--n-users", "abc"])), 1);
}

#[test]
fn gen_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for d in [&a, &b] {
        let out = gridcast(&["gen", "--seed", "7", "--n-users", "5", "--out", d.to_str().unwrap()]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    for f in ["instance.json", "scene.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let scene: serde_json::Value =
        serde_json::from_slice(&fs::read(a.join("scene.json")).unwrap()).unwrap();
    assert_eq!(scene["provenance"]["seed"], 7);
    assert_eq!(scene["provenance"]["params"]["n_users"], 5);
    assert!(scene["provenance"]["version"].is_string());
}

#[test]
fn gen_rejects_invalid_params() {
    let dir = TempDir::new().unwrap();
    let out = gridcast(&["gen", "--n-users", "0", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(!dir.path().join("instance.json").exists());
}

#[test]
fn gen_reads_params_file() {
    let dir = TempDir::new().unwrap();
    let params = dir.path().join("p.json");
    fs::write(&params, r#"{"n_users": 3, "height": 4, "width": 6}"#).unwrap();
    let out_dir = dir.path().join("g");
    let out = gridcast(&[
        "gen",
        "--params",
        params.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let inst: gridcast::ProblemInstance =
        serde_json::from_slice(&fs::read(out_dir.join("instance.json")).unwrap()).unwrap();
    assert_eq!(inst.n_users(), 3);
    assert_eq!(inst.n_grids(), 24);
}

#[test]
fn solve_fig1_utilities() {
    let dir = TempDir::new().unwrap();
    let inst = fig1(dir.path());
    for (solver, want, id) in [
        ("greedy_accel", 8.0, "greedy_accel"),
        ("greedy", 8.0, "greedy"),
        ("broadcast", 6.0, "broadcast"),
        ("unicast", 3.0, "unicast"),
        ("oracle", 8.0, "oracle"),
    ] {
        let out = gridcast(&["solve", &inst, "--solver", solver]);
        assert_eq!(code(&out), 0, "{solver}: {}", String::from_utf8_lossy(&out.stderr));
        let v = json(&out);
        assert_eq!(v["utility"].as_f64().unwrap(), want, "{solver}");
        assert_eq!(v["solver"], id);
    }
}

#[test]
fn unknown_solver_lists_ids() {
    let dir = TempDir::new().unwrap();
    let inst = fig1(dir.path());
    let out = gridcast(&["solve", &inst, "--solver", "nope"]);
    assert_eq!(code(&out), 1);
    let err = String::from_utf8_lossy(&out.stderr);
    for id in ["greedy_accel", "marginal_util", "kmeanspp", "dp_fair", "oracle"] {
        assert!(err.contains(id), "{err}");
    }
}

#[test]
fn oracle_over_cap_is_runtime_failure() {
    let dir = TempDir::new().unwrap();
    let inst = fig1(dir.path());
    let out = gridcast(&["solve", &inst, "--solver", "oracle", "--oracle-cap", "10"]);
    assert_eq!(code(&out), 2);
    let out = gridcast(&["oracle", &inst, "--cap", "10"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn missing_instance_is_runtime_failure() {
    let out = gridcast(&["solve", "/nonexistent/instance.json"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn oracle_cache_hit() {
    let dir = TempDir::new().unwrap();
    let inst = fig1(dir.path());
    let cache = dir.path().join("cache");
    let first = gridcast(&["oracle", &inst, "--cache", cache.to_str().unwrap()]);
    assert_eq!(code(&first), 0);
    let entries: Vec<_> = fs::read_dir(&cache).unwrap().collect();
    assert_eq!(entries.len(), 1);
    let name = entries[0].as_ref().unwrap().file_name().into_string().unwrap();
    assert_eq!(name.len(), 64 + ".json".len());
    // a cap of 1 would fail without the cache
    let second = gridcast(&["oracle", &inst, "--cache", cache.to_str().unwrap(), "--cap", "1"]);
    assert_eq!(code(&second), 0);
    assert_eq!(json(&first), json(&second));
    assert_eq!(json(&second)["opt_utility"].as_f64().unwrap(), 8.0);
}

const SWEEP: &str = r#"{
    "variable": "budget",
    "values": [0.005, 0.02],
    "solvers": ["greedy", "greedy_accel", "marginal_util"],
    "params": {"n_users": 4, "height": 5, "width": 6},
    "repetitions": 2,
    "seed": 11
}"#;

#[derive(Debug, serde::Deserialize, PartialEq)]
struct Row {
    solver: String,
    variable: String,
    value: f64,
    seed: u64,
    utility: f64,
    latency_s: f64,
    wall_time_s: f64,
    gain_evaluations: u64,
    feasible: bool,
    error: String,
}

fn read_rows(path: &Path) -> Vec<Row> {
    csv::Reader::from_path(path)
        .unwrap()
        .deserialize()
        .collect::<Result<_, _>>()
        .unwrap()
}

#[test]
fn sweep_csv_round_trip_and_reproducible() {
    let dir = TempDir::new().unwrap();
    let spec = dir.path().join("spec.json");
    fs::write(&spec, SWEEP).unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let out = gridcast(&["sweep", spec.to_str().unwrap(), "--out", a.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let out = gridcast(&[
        "sweep",
        spec.to_str().unwrap(),
        "--out",
        b.to_str().unwrap(),
        "--jobs",
        "3",
    ]);
    assert_eq!(code(&out), 0);

    let ra = read_rows(&a);
    let rb = read_rows(&b);
    assert_eq!(ra.len(), 3 * 2 * 2);
    let strip = |rows: &[Row]| -> Vec<(String, f64, u64, f64, f64, u64)> {
        rows.iter()
            .map(|r| (r.solver.clone(), r.value, r.seed, r.utility, r.latency_s, r.gain_evaluations))
            .collect()
    };
    assert_eq!(strip(&ra), strip(&rb));
    for r in &ra {
        assert_eq!(r.variable, "budget");
        assert!(r.feasible && r.error.is_empty());
        assert!(r.latency_s <= r.value * (1.0 + 1e-9));
        assert!(r.wall_time_s >= 0.0);
        assert!([11, 12].contains(&r.seed));
    }
    assert_eq!(ra[0].solver, "greedy");
    assert_eq!(ra.last().unwrap().solver, "marginal_util");

    let summary: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("a.summary.json")).unwrap()).unwrap();
    assert_eq!(summary["points"].as_array().unwrap().len(), 2);
}

#[test]
fn sweep_rejects_unknown_solver() {
    let dir = TempDir::new().unwrap();
    let spec = dir.path().join("spec.json");
    fs::write(&spec, SWEEP.replace("marginal_util", "nope")).unwrap();
    let out = gridcast(&[
        "sweep",
        spec.to_str().unwrap(),
        "--out",
        dir.path().join("o.csv").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1);
}

#[test]
fn bench_writes_both_solvers() {
    let dir = TempDir::new().unwrap();
    let csv_path = dir.path().join("bench.csv");
    let out = gridcast(&[
        "bench",
        "--users",
        "2,4",
        "--grids",
        "10,20",
        "--height",
        "5",
        "--width",
        "2",
        "--n-users",
        "4",
        "--repetitions",
        "2",
        "--out",
        csv_path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let mut rdr = csv::Reader::from_path(&csv_path).unwrap();
    let headers: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(
        headers,
        [
            "solver",
            "n_users",
            "n_grids",
            "repetitions",
            "median_wall_s",
            "p95_wall_s",
            "median_gain_evaluations",
            "p95_gain_evaluations"
        ]
    );
    let rows: Vec<csv::StringRecord> = rdr.records().collect::<Result<_, _>>().unwrap();
    assert!(!rows.is_empty());
    assert!(rows.iter().any(|r| &r[0] == "greedy"));
    assert!(rows.iter().any(|r| &r[0] == "greedy_accel"));
}
