use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use cachenet::special::odd_cycle_instance;
use serde_json::Value;
use tempfile::TempDir;

fn cachenet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cachenet"))
        .args(args)
        .env_remove("CACHENET_MAX_ENUM")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = cachenet(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn p(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_str().unwrap().to_string()
}

#[test]
fn gen_solve_simulate_round_trip() {
    let dir = TempDir::new().unwrap();
    let inst = p(&dir, "inst.json");
    ok(&["gen", "--seed", "3", "--budget", "4", "-o", &inst]);

    let again = p(&dir, "again.json");
    ok(&["gen", "--seed", "3", "--budget", "4", "-o", &again]);
    assert_eq!(fs::read(&inst).unwrap(), fs::read(&again).unwrap());

    let opt = p(&dir, "opt.json");
    let wg = p(&dir, "wg.json");
    ok(&["solve", &inst, "--algorithm", "bruteforce", "-o", &opt]);
    ok(&["solve", &inst, "--algorithm", "greedywg", "--explain", "-o", &wg]);
    let (d_opt, d_wg) = (
        json(Path::new(&opt))["average_delay"].as_f64().unwrap(),
        json(Path::new(&wg))["average_delay"].as_f64().unwrap(),
    );
    assert!(d_wg >= d_opt - 1e-9 && d_wg <= 1.01 * d_opt, "{d_wg} vs {d_opt}");
    assert!(json(Path::new(&wg))["trace"]["steps"].is_array());

    let report = p(&dir, "sim.json");
    ok(&["simulate", &inst, "--policy-file", &opt, "--requests", "200000", "--seed", "1", "-o", &report]);
    let r = json(Path::new(&report));
    let (mean, hw) = (r["mean_delay"].as_f64().unwrap(), r["half_width"].as_f64().unwrap());
    assert!((mean - d_opt).abs() <= 4.0 * hw + 1e-9, "{mean} ± {hw} vs {d_opt}");

    let replay = p(&dir, "replay.json");
    ok(&["simulate", &inst, "--policy-file", &opt, "--requests", "200000", "--seed", "1", "-o", &replay]);
    assert_eq!(fs::read(&report).unwrap(), fs::read(&replay).unwrap());
}

#[test]
fn check_reports_the_odd_cycle_gap() {
    let dir = TempDir::new().unwrap();
    let inst = p(&dir, "ring.json");
    fs::write(&inst, odd_cycle_instance().to_json()).unwrap();
    let report = p(&dir, "check.json");
    ok(&["check", &inst, "-o", &report]);
    let r = json(Path::new(&report));
    assert!((r["gap"].as_f64().unwrap() - 1.0 / 3.0).abs() <= 1e-9);
    assert!((r["ilp"].as_f64().unwrap() - 4.0 / 3.0).abs() <= 1e-9);
    assert_eq!(r["tu"], Value::Bool(false));
    assert_eq!(r["bad_cycles"].as_array().unwrap().len(), 1);
}

#[test]
fn plru_solve_feeds_simulation() {
    let dir = TempDir::new().unwrap();
    let inst = p(&dir, "inst.json");
    ok(&["gen", "--architecture", "multi", "--users", "20", "--files", "30", "--service-ratio", "0.8", "-o", &inst]);
    let out = p(&dir, "plru.json");
    ok(&["solve", &inst, "--algorithm", "plru", "-o", &out]);
    let policy = json(Path::new(&out));
    assert_eq!(policy["policy"]["kind"], "p_lru");
    ok(&["simulate", &inst, "--policy-file", &out, "--requests", "20000"]);
}

#[test]
fn greedy_beats_plru_across_budgets() {
    let dir = TempDir::new().unwrap();
    let csv = p(&dir, "sweep.csv");
    ok(&[
        "experiment",
        "--architecture",
        "multi",
        "--users",
        "40",
        "--files",
        "60",
        "--zipf",
        "0.8",
        "--service-ratio",
        "0.8",
        "--algorithms",
        "greedy,plru",
        "--values",
        "5,10,20",
        "--replications",
        "3",
        "-o",
        &csv,
    ]);
    let text = fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("sweep_value,algorithm,mean_delay,half_width"));
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    assert_eq!(rows.len(), 6);
    for pair in rows.chunks(2) {
        let delay = |name: &str| {
            pair.iter()
                .find(|r| r[1] == name)
                .map(|r| r[2].parse::<f64>().unwrap())
                .unwrap()
        };
        assert!(delay("greedy") <= delay("plru"), "{pair:?}");
    }
}

#[test]
fn trace_experiment_runs() {
    let dir = TempDir::new().unwrap();
    let trace = p(&dir, "trace.csv");
    ok(&["gen", "--users", "30", "--files", "100", "--trace", "3000", "--seed", "2", "-o", &trace]);
    let out = cachenet(&[
        "experiment", "--trace", &trace, "--architecture", "multi", "--service-ratio", "0.8", "--values", "5,10",
        "--segment-size", "1000", "--pairs", "2",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 2);
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let inst = p(&dir, "inst.json");
    ok(&["gen", "--constant-delay", "-o", &inst]);

    let bad_alg = cachenet(&["solve", &inst, "--algorithm", "simulated-annealing"]);
    assert_eq!(bad_alg.status.code(), Some(1));

    let missing = cachenet(&["solve", &p(&dir, "nope.json")]);
    assert_eq!(missing.status.code(), Some(1));

    let broken = p(&dir, "broken.json");
    fs::write(&broken, "{\"num_users\": 1}").unwrap();
    assert_eq!(cachenet(&["solve", &broken]).status.code(), Some(1));

    let capped = cachenet(&["--max-enum", "3", "solve", &inst, "--algorithm", "bruteforce"]);
    assert_eq!(capped.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&capped.stderr).contains("3"));

    // Mandatory load alone saturates the queue.
    let mut v = json(Path::new(&inst));
    v["adjacency"] = serde_json::json!(vec![vec![false]; 5]);
    v["uncached_model"] = serde_json::json!({"type": "congestion_sensitive", "service_rate": 1.0});
    let saturated = p(&dir, "saturated.json");
    fs::write(&saturated, v.to_string()).unwrap();
    let unstable = cachenet(&["solve", &saturated, "--algorithm", "greedy"]);
    assert_eq!(unstable.status.code(), Some(2), "{}", String::from_utf8_lossy(&unstable.stderr));

    let gap_on_cs = p(&dir, "cs.json");
    ok(&["gen", "-o", &gap_on_cs]);
    assert_eq!(cachenet(&["check", &gap_on_cs, "--gap"]).status.code(), Some(1));
}

#[test]
fn sequential_flag_gives_identical_output() {
    let dir = TempDir::new().unwrap();
    let inst = p(&dir, "inst.json");
    ok(&["gen", "--architecture", "multi", "--users", "15", "--files", "20", "--seed", "9", "-o", &inst]);
    let a = ok(&["solve", &inst, "--algorithm", "greedywg", "--explain"]).stdout;
    let b = ok(&["--sequential", "solve", &inst, "--algorithm", "greedywg", "--explain"]).stdout;
    assert_eq!(a, b);
}
