mod common;

use common::{Tiny, DEPOT};
use eamod::analysis::{
    aggregate, fixed_cost, overlap_probability, run_scenarios, solve_scenario, spearman, vehicle_metrics, ScenarioConfig,
    ScenarioContext, ScenarioResult, VehicleMetrics,
};
use eamod::demand::sample_subproblem;
use eamod::economics::{optimal_battery_unit_cost, per_km_cost, LifetimeModel};
use eamod::milp::{EconomicParams, FleetSolution, SolutionStatus};
use eamod::solver::brute_force;
use eamod::transition_graph::{build_dag, HeuristicThresholds};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn metrics_strategy() -> impl Strategy<Value = Vec<VehicleMetrics>> {
    prop::collection::vec((0usize..5, 0usize..10, 0.0f64..200.0, 0.0f64..30.0, 1.0f64..80.0), 0..4).prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(k, (stops, served, revenue, charge, battery))| VehicleMetrics {
                vehicle: k,
                stops,
                requests_served: served,
                revenue_eur: revenue,
                avg_charge_per_stop_kwh: charge,
                rebalancing_km: 0.0,
                station_detour_km: 0.0,
                battery_kwh: battery,
            })
            .collect()
    })
}

fn result(id: usize, metrics: Vec<VehicleMetrics>, optimal: bool) -> ScenarioResult {
    let mut sol = FleetSolution::idle(0, 1);
    sol.status = if optimal { SolutionStatus::Optimal } else { SolutionStatus::TimeLimit };
    ScenarioResult {
        scenario_id: id,
        seed: id as u64,
        n_requests: 0,
        request_ids: Vec::new(),
        solution: Some(sol),
        report: None,
        metrics,
        wall_time_s: 0.0,
        error: None,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn overlap_is_a_unimodal_distribution(n in 1u64..300, t_avg in 0.01f64..1.0, ratio in 1.5f64..20.0) {
        let t_w = t_avg * ratio;
        let p: Vec<f64> = (0..=n).map(|k| overlap_probability(n, k, t_avg, t_w).unwrap()).collect();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
        let mode = p.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        let tol = 1e-15;
        prop_assert!(p[..=mode].windows(2).all(|w| w[1] >= w[0] - tol));
        prop_assert!(p[mode..].windows(2).all(|w| w[1] <= w[0] + tol));
    }

    #[test]
    fn aggregate_ignores_scenario_order(
        scenarios in prop::collection::vec((metrics_strategy(), any::<bool>()), 1..8),
        seed in any::<u64>(),
    ) {
        let results: Vec<ScenarioResult> =
            scenarios.into_iter().enumerate().map(|(i, (m, opt))| result(i, m, opt)).collect();
        let mut shuffled = results.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let a = aggregate(&results).unwrap();
        let b = aggregate(&shuffled).unwrap();
        prop_assert_eq!(a.scenarios_used + a.scenarios_excluded, results.len());
        prop_assert_eq!(a.scenarios_used, b.scenarios_used);
        for (x, y) in a.rows.iter().zip(&b.rows) {
            prop_assert_eq!(&x.metric, &y.metric);
            prop_assert_eq!(x.count, y.count);
            prop_assert_eq!(x.vehicles, y.vehicles);
            prop_assert_eq!(x.min, y.min);
            prop_assert_eq!(x.max, y.max);
            prop_assert!((x.mean - y.mean).abs() <= 1e-9 * (1.0 + x.mean.abs()));
            prop_assert!((x.std_dev - y.std_dev).abs() <= 1e-9 * (1.0 + x.std_dev.abs()));
            prop_assert!(x.min <= x.mean + 1e-9 && x.mean <= x.max + 1e-9 || x.vehicles == 0);
        }
    }

    #[test]
    fn per_km_cost_is_minimized_at_the_closed_form(e_b in 0.5f64..150.0, p_v in 1000.0f64..20000.0, p_b in 50.0f64..1000.0) {
        let mut econ = EconomicParams::default();
        econ.p_v_eur = p_v;
        econ.p_b_eur_per_kwh = p_b;
        let model = LifetimeModel::new(&econ).unwrap();
        let best = optimal_battery_unit_cost(&model);
        let at_best = per_km_cost(best, &model).unwrap();
        prop_assert!(at_best <= per_km_cost(e_b, &model).unwrap() * (1.0 + 1e-12));
        // Convex in the battery size: midpoint below the chord.
        let (a, b) = (e_b, e_b * 1.7);
        let mid = per_km_cost(0.5 * (a + b), &model).unwrap();
        let chord = 0.5 * (per_km_cost(a, &model).unwrap() + per_km_cost(b, &model).unwrap());
        prop_assert!(mid <= chord * (1.0 + 1e-12));
    }

    #[test]
    fn fixed_cost_grows_with_fleet_and_battery(fleet in 0usize..50, e_b in 0.1f64..100.0, extra in 0.0f64..50.0) {
        let econ = EconomicParams::default();
        prop_assert!(fixed_cost(fleet, e_b, &econ) >= 0.0);
        prop_assert!(fixed_cost(fleet + 1, e_b, &econ) >= fixed_cost(fleet, e_b, &econ));
        prop_assert!(fixed_cost(fleet, e_b + extra, &econ) >= fixed_cost(fleet, e_b, &econ));
    }

    #[test]
    fn spearman_is_bounded_and_symmetric(pairs in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 2..20)) {
        let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let r = spearman(&x, &y);
        if r.is_finite() {
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&r));
            prop_assert!((r - spearman(&y, &x)).abs() < 1e-12);
            let neg: Vec<f64> = y.iter().map(|v| -v).collect();
            prop_assert!((r + spearman(&x, &neg)).abs() < 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn relabeling_requests_keeps_the_optimum(seed in 0u64..10_000, shuffle in any::<u64>()) {
        let t = Tiny::new(seed, 8.0);
        let econ = EconomicParams::default();
        let base = brute_force(&t.dag(None), &econ, &t.opts).unwrap();

        let mut relabeled = t.requests.clone();
        relabeled.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle));
        for (i, r) in relabeled.iter_mut().enumerate() {
            r.id = 1000 + (i as u64) * 7;
        }
        let dag = build_dag(&relabeled, &t.net, &t.stations, DEPOT, 80.0, None).unwrap();
        let other = brute_force(&dag, &econ, &t.opts).unwrap();
        prop_assert!((base.objective_eur - other.objective_eur).abs() <= 1e-6);
    }

    #[test]
    fn pruning_never_improves_the_optimum(seed in 0u64..10_000) {
        let t = Tiny::new(seed, 8.0);
        let econ = EconomicParams::default();
        let full = brute_force(&t.dag(None), &econ, &t.opts).unwrap();
        let pruned = brute_force(&t.dag(Some(&HeuristicThresholds::default())), &econ, &t.opts).unwrap();
        prop_assert!(pruned.objective_eur >= full.objective_eur - 1e-6);
    }
}

#[test]
fn stored_request_ids_reproduce_scenario_metrics() {
    let t = Tiny::new(11, 8.0);
    let mut requests = Vec::new();
    for s in 0..4 {
        let extra = Tiny::new(100 + s, 8.0);
        requests.extend(extra.requests.into_iter().map(|mut r| {
            r.id += 100 * (s + 1);
            r
        }));
    }
    requests.extend(t.requests.iter().cloned());
    let ctx = ScenarioContext::new(&t.net, &t.stations, &requests, DEPOT).unwrap();
    let mut cfg = ScenarioConfig::default();
    cfg.fleet.k_max = 1;
    let results = run_scenarios(&ctx, 4, 3, 42, &cfg).unwrap();
    for r in &results {
        let sol = r.solution.as_ref().expect("scenario solved");
        let picked = sample_subproblem(&requests, 4, r.seed).unwrap();
        assert_eq!(picked.iter().map(|q| q.id).collect::<Vec<_>>(), r.request_ids);

        let subset: Vec<_> = requests.iter().filter(|q| r.request_ids.contains(&q.id)).cloned().collect();
        let (dag, again, _) = solve_scenario(&ctx, &subset, &cfg).unwrap();
        assert_eq!(again.objective_eur.to_bits(), sol.objective_eur.to_bits());
        assert_eq!(vehicle_metrics(&again, &dag), r.metrics);
    }
}
