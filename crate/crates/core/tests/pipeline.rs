mod common;

use common::{Tiny, DEPOT};
use eamod::analysis::{
    aggregate, overlap_table, run_scenarios, size_scan, write_overlap, write_scenario_results, write_size_scan,
    ScenarioConfig, ScenarioContext, ScenarioResult, AGGREGATE_METRICS,
};
use eamod::milp::{assemble_model, check_feasibility, EconomicParams};
use eamod::solver::export_mps;
use eamod_lp::{branch_and_bound, import_mps, BranchOptions};
use tempfile::TempDir;

fn pool() -> (Tiny, Vec<eamod::demand::TravelRequest>) {
    let t = Tiny::new(5, 8.0);
    let mut requests = t.requests.clone();
    for s in 0..3 {
        requests.extend(Tiny::new(50 + s, 8.0).requests.into_iter().map(|mut r| {
            r.id += 100 * (s + 1);
            r
        }));
    }
    (t, requests)
}

#[test]
fn scenarios_round_trip_through_json_and_csv() {
    let (t, requests) = pool();
    let ctx = ScenarioContext::new(&t.net, &t.stations, &requests, DEPOT).unwrap();
    let mut cfg = ScenarioConfig::default();
    cfg.fleet.k_max = 2;
    cfg.jobs = 2;
    let results = run_scenarios(&ctx, 3, 4, 7, &cfg).unwrap();
    assert_eq!(results.iter().map(|r| r.seed).collect::<Vec<_>>(), [7, 8, 9, 10]);

    let dir = TempDir::new().unwrap();
    write_scenario_results(dir.path(), &results).unwrap();
    for r in &results {
        let path = dir.path().join(format!("scenario_{:03}/results.json", r.scenario_id));
        let back: ScenarioResult = serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap();
        assert_eq!(&back, r);
        let sol = r.solution.as_ref().unwrap();
        let subset: Vec<_> = requests.iter().filter(|q| r.request_ids.contains(&q.id)).cloned().collect();
        let dag = ctx.build_dag(&subset, cfg.econ.e_b_max_kwh, cfg.heuristic.as_ref()).unwrap();
        assert!(check_feasibility(&dag, &cfg.econ, &cfg.fleet, sol, 1e-6).is_empty());
    }

    let stats = aggregate(&results).unwrap();
    let csv = dir.path().join("aggregate.csv");
    stats.write_csv(&csv).unwrap();
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next().unwrap(), "metric,mean,std_dev,min,max,count,vehicles");
    let names: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(names, AGGREGATE_METRICS);
}

#[test]
fn size_scan_normalizes_the_largest_size_to_minus_one() {
    let (t, requests) = pool();
    let ctx = ScenarioContext::new(&t.net, &t.stations, &requests, DEPOT).unwrap();
    let cfg = ScenarioConfig::default();
    let rows = size_scan(&ctx, &[2, 4], 3, 0, 2, &cfg).unwrap();
    assert_eq!(rows.iter().map(|r| r.k_max).collect::<Vec<_>>(), [1, 2]);
    let last = rows.last().unwrap();
    if last.mean_objective_per_request != 0.0 {
        assert!((last.normalized_objective + 1.0).abs() < 1e-12 || (last.normalized_objective - 1.0).abs() < 1e-12);
    }
    let dir = TempDir::new().unwrap();
    write_size_scan(&dir.path().join("scan.csv"), &rows).unwrap();
    assert_eq!(std::fs::read_to_string(dir.path().join("scan.csv")).unwrap().lines().count(), 3);
}

#[test]
fn overlap_writer_emits_every_k() {
    let rows = overlap_table(&[3, 5], 0.25, 3.0).unwrap();
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("overlap.csv");
    write_overlap(&path, &rows).unwrap();
    assert_eq!(std::fs::read_to_string(path).unwrap().lines().count(), 1 + 4 + 6);
}

#[test]
fn exported_model_solves_to_the_same_objective() {
    let econ = EconomicParams::default();
    for seed in 400..405 {
        let t = Tiny::new(seed, 8.0);
        let dag = t.dag(None);
        let model = assemble_model(&dag, &econ, &t.opts).unwrap();
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("m.mps");
        export_mps(&model, &path).unwrap();
        let back = import_mps(&path).unwrap();
        let opts = BranchOptions::default();
        let a = branch_and_bound(&model.problem, &opts, None).unwrap();
        let b = branch_and_bound(&back, &opts, None).unwrap();
        assert!((a.objective - b.objective).abs() < 1e-9, "seed {seed}: {} vs {}", a.objective, b.objective);
    }
}
