use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use eamod::demand::load_requests;
use eamod::milp::{EconomicParams, FleetOptions};
use eamod::road_network::{load_stations, RoadNetwork};
use eamod::solver::brute_force;
use eamod::transition_graph::build_dag;
use serde_json::{json, Value};
use tempfile::TempDir;

fn eamod(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eamod"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = eamod(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn write_config(dir: &Path, value: Value) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(&value).unwrap()).unwrap();
    path
}

/// Generates an instance under `dir/data` and returns a config pointing at it.
fn instance(dir: &Path, generate: Value, extra: Value) -> PathBuf {
    let data = dir.join("data");
    let gen_cfg = write_config(dir, json!({ "generate": generate }));
    ok(&["--config", gen_cfg.to_str().unwrap(), "--out", data.to_str().unwrap(), "generate"]);
    let mut cfg = json!({
        "paths": {
            "nodes": data.join("nodes.csv"),
            "arcs": data.join("arcs.csv"),
            "stations": data.join("stations.csv"),
            "requests": data.join("requests.csv"),
            "output_dir": dir.join("out"),
        }
    });
    for (k, v) in extra.as_object().unwrap() {
        cfg[k] = v.clone();
    }
    write_config(dir, cfg)
}

fn small_grid() -> Value {
    json!({ "rows": 3, "cols": 3, "block_km": 2.0, "n_stations": 1, "n_requests": 4, "window_h": 6.0 })
}

#[test]
fn two_by_two_grid_has_four_nodes() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), json!({ "generate": { "rows": 2, "cols": 2, "n_stations": 1, "n_requests": 3 } }));
    let out = dir.path().join("g");
    ok(&["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "generate"]);
    let nodes = fs::read_to_string(out.join("nodes.csv")).unwrap();
    assert_eq!(nodes.lines().count(), 1 + 4);
}

#[test]
fn generation_is_reproducible_per_seed() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), json!({ "generate": { "rows": 4, "cols": 4, "n_requests": 30 } }));
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        ok(&["--config", cfg.to_str().unwrap(), "--seed", seed, "--out", out.to_str().unwrap(), "generate"]);
        out
    };
    let (a, b, c) = (run("a", "7"), run("b", "7"), run("c", "8"));
    for f in ["nodes.csv", "arcs.csv", "stations.csv", "requests.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_ne!(fs::read(a.join("requests.csv")).unwrap(), fs::read(c.join("requests.csv")).unwrap());
}

#[test]
fn start_times_fall_in_the_window() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), json!({ "generate": { "rows": 5, "cols": 5, "n_requests": 100, "window_h": 3.0 } }));
    let out = dir.path().join("g");
    ok(&["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "generate"]);
    let text = fs::read_to_string(out.join("requests.csv")).unwrap();
    let mut rows = text.lines();
    let header: Vec<&str> = rows.next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "start_time_h").unwrap();
    let starts: Vec<f64> = rows.map(|l| l.split(',').nth(col).unwrap().parse().unwrap()).collect();
    assert_eq!(starts.len(), 100);
    assert!(starts.iter().all(|t| (0.0..=3.0).contains(t)));
}

#[test]
fn empty_request_file_costs_nothing() {
    let dir = TempDir::new().unwrap();
    let cfg = instance(dir.path(), small_grid(), json!({}));
    let requests = dir.path().join("data/requests.csv");
    let header = fs::read_to_string(&requests).unwrap().lines().next().unwrap().to_string();
    fs::write(&requests, format!("{header}\n")).unwrap();
    ok(&["--config", cfg.to_str().unwrap(), "solve"]);
    let result: Value = serde_json::from_slice(&fs::read(dir.path().join("out/results.json")).unwrap()).unwrap();
    assert_eq!(result["solution"]["objective_eur"].as_f64().unwrap(), 0.0);
}

#[test]
fn solve_matches_exhaustive_search_and_exports_mps() {
    let dir = TempDir::new().unwrap();
    let cfg = instance(dir.path(), small_grid(), json!({ "fleet": { "k_max": 1 } }));
    ok(&["--config", cfg.to_str().unwrap(), "--export-mps", "solve"]);
    let out = dir.path().join("out");
    let mps = fs::read_to_string(out.join("model.mps")).unwrap();
    assert!(mps.starts_with("NAME") || mps.contains("\nROWS"), "not an MPS file");
    let result: Value = serde_json::from_slice(&fs::read(out.join("results.json")).unwrap()).unwrap();
    let objective = result["solution"]["objective_eur"].as_f64().unwrap();

    let data = dir.path().join("data");
    let net = RoadNetwork::load_csv(&data.join("nodes.csv"), &data.join("arcs.csv")).unwrap();
    let stations = load_stations(&data.join("stations.csv"), &net).unwrap();
    let requests = load_requests(&data.join("requests.csv"), &net, &Default::default()).unwrap();
    let econ = EconomicParams::default();
    let opts = FleetOptions { k_max: 1, ..FleetOptions::default() };
    let dag = build_dag(&requests, &net, &stations, 0, econ.e_b_max_kwh, Some(&Default::default())).unwrap();
    let oracle = brute_force(&dag, &econ, &opts).unwrap();
    assert!((objective - oracle.objective_eur).abs() <= 1e-6, "{objective} vs {}", oracle.objective_eur);
}

#[test]
fn overlap_table_row_for_single_request() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), json!({ "experiment": { "overlap_n": [1, 1000] } }));
    let out = dir.path().join("o");
    ok(&["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "experiment", "overlap"]);
    let text = fs::read_to_string(out.join("overlap.csv")).unwrap();
    let row = text.lines().find(|l| l.starts_with("1,1,")).unwrap();
    let p: f64 = row.split(',').nth(2).unwrap().parse().unwrap();
    assert!((p - 1.0 / 12.0).abs() < 1e-12);
    assert!(format!("{p:.6}") == "0.083333");
}

#[test]
fn lifetime_curve_minimum_near_twenty_kwh() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("l");
    ok(&["--out", out.to_str().unwrap(), "experiment", "lifetime"]);
    let text = fs::read_to_string(out.join("lifetime.csv")).unwrap();
    let best = text
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
            (f[0], f[2])
        })
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    assert!((best.0 - 20.3).abs() <= 0.1 + 1e-9, "argmin {}", best.0);
}

#[test]
fn sample_writes_one_result_per_scenario() {
    let dir = TempDir::new().unwrap();
    let cfg = instance(
        dir.path(),
        json!({ "rows": 3, "cols": 3, "n_stations": 1, "n_requests": 10, "window_h": 6.0 }),
        json!({ "experiment": { "m": 2, "n_per": 3 }, "fleet": { "k_max": 1 } }),
    );
    ok(&["--config", cfg.to_str().unwrap(), "--jobs", "2", "experiment", "sample"]);
    let out = dir.path().join("out");
    let results: Vec<_> = fs::read_dir(&out)
        .unwrap()
        .filter_map(|e| {
            let p = e.unwrap().path().join("results.json");
            p.exists().then_some(p)
        })
        .collect();
    assert_eq!(results.len(), 2);
    assert!(out.join("aggregate.csv").exists());
}

#[test]
fn bad_config_reports_the_key_path() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), json!({ "economics": { "p_v_eur": "free" } }));
    let out = eamod(&["--config", cfg.to_str().unwrap(), "experiment", "overlap"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("economics.p_v_eur"));

    let cfg = write_config(dir.path(), json!({ "paths": { "requests": dir.path().join("missing.csv") } }));
    let out = eamod(&["--config", cfg.to_str().unwrap(), "solve"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("paths."));
}

#[test]
fn usage_errors_and_help() {
    assert_eq!(eamod(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(eamod(&["experiment", "nothing"]).status.code(), Some(1));
    let help = ok(&["--help"]);
    let text = String::from_utf8_lossy(&help.stdout);
    for key in ["paths.output_dir", "economics.tau_cycle", "fleet.e_b0_kwh", "heuristic.enabled", "solver.time_limit_s", "experiment.e_b_grid", "generate.window_h", "tariff.alpha_eur"] {
        assert!(text.contains(&format!("{key} = ")), "{key} missing from --help");
    }
}

#[test]
fn unreachable_quota_is_recorded_per_grid_point() {
    let dir = TempDir::new().unwrap();
    let cfg = instance(
        dir.path(),
        small_grid(),
        json!({ "experiment": { "e_b_grid": [0.05, 40.0], "quota": 1, "n_per": 4 }, "fleet": { "k_max": 1 } }),
    );
    ok(&["--config", cfg.to_str().unwrap(), "experiment", "sensitivity"]);
    let csv = fs::read_to_string(dir.path().join("out/sensitivity.csv")).unwrap();
    let status: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    // No 2 km leg fits in a 0.05 kWh battery.
    assert_eq!(status, ["infeasible_quota", "optimal"]);
}
