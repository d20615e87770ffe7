mod common;

use common::Tiny;
use eamod::milp::{assemble_model, check_feasibility, objective_value, EconomicParams};
use eamod::solver::{brute_force, solve, SolveOptions};

#[test]
fn branch_and_bound_matches_the_oracle() {
    let econ = EconomicParams::default();
    for seed in 0..50 {
        let t = Tiny::new(seed, 2.0);
        let dag = t.dag(None);
        let oracle = brute_force(&dag, &econ, &t.opts).unwrap();
        assert!(check_feasibility(&dag, &econ, &t.opts, &oracle, 1e-6).is_empty(), "seed {seed}");
        let model = assemble_model(&dag, &econ, &t.opts).unwrap();
        let (sol, report) = solve(&model, &dag, &SolveOptions::default()).unwrap();
        assert!(
            (report.objective - oracle.objective_eur).abs() <= 1e-6,
            "seed {seed}: {} vs {}",
            report.objective,
            oracle.objective_eur
        );
        let v = check_feasibility(&dag, &econ, &t.opts, &sol, 1e-6);
        assert!(v.is_empty(), "seed {seed}: {v:?}");
        assert!((objective_value(&sol, &dag.ext, &econ) - report.objective).abs() <= 1e-6);
        assert!(report.bound <= report.objective + 1e-6);
    }
}
