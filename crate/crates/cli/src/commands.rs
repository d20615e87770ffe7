use std::fs;
use std::path::{Path, PathBuf};

use eamod::analysis::{
    aggregate, battery_sensitivity, overlap_table, run_scenarios, size_scan, vehicle_metrics, write_overlap,
    write_scenario_results, write_sensitivity, write_size_scan, ScenarioContext, ScenarioResult,
};
use eamod::demand::{load_requests, sample_subproblem, synth_requests, write_requests, TravelRequest};
use eamod::economics::{battery_grid, cost_curve, reference_daily_distance_km, write_cost_curve, LifetimeModel};
use eamod::io::write_json;
use eamod::milp::assemble_model;
use eamod::road_network::{generate_grid, load_stations, write_stations, ChargingStation, RoadNetwork};
use eamod::solver::{export_mps, solve};
use log::{info, warn};

use crate::config::RunConfig;
use crate::CliError;

/// Seed offsets from `experiment.seed`, one per consumer.
pub mod seed_offset {
    pub const NETWORK: u64 = 0;
    pub const REQUESTS: u64 = 1;
    pub const SENSITIVITY_SAMPLE: u64 = 2;
    /// Scenario `i` samples with `seed + SCENARIOS + i`.
    pub const SCENARIOS: u64 = 1000;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Sample,
    SizeScan,
    Sensitivity,
    Lifetime,
    Overlap,
}

/// Settings shared by every command after flag overrides are applied.
pub struct Run {
    pub cfg: RunConfig,
    pub export_mps: bool,
}

impl Run {
    fn seed(&self, offset: u64) -> u64 {
        self.cfg.experiment.seed.wrapping_add(offset)
    }

    fn out_dir(&self) -> Result<PathBuf, CliError> {
        let dir = self.cfg.paths.output_dir.clone();
        fs::create_dir_all(&dir).map_err(|e| CliError::Io { path: dir.clone(), source: e })?;
        Ok(dir)
    }

    fn require(&self, key: &str, path: &Path) -> Result<(), CliError> {
        if path.is_file() {
            Ok(())
        } else {
            Err(CliError::Config {
                key: format!("paths.{key}"),
                msg: format!("{} does not exist", path.display()),
            })
        }
    }

    fn load_inputs(&self) -> Result<(RoadNetwork, Vec<ChargingStation>, Vec<TravelRequest>), CliError> {
        let p = &self.cfg.paths;
        for (key, path) in [("nodes", &p.nodes), ("arcs", &p.arcs), ("stations", &p.stations), ("requests", &p.requests)] {
            self.require(key, path)?;
        }
        let net = RoadNetwork::load_csv(&p.nodes, &p.arcs).map_err(CliError::Data)?;
        let stations = load_stations(&p.stations, &net).map_err(CliError::Data)?;
        let requests = load_requests(&p.requests, &net, &self.cfg.tariff).map_err(CliError::Data)?;
        info!("loaded {} nodes, {} stations, {} requests", net.nodes().len(), stations.len(), requests.len());
        Ok((net, stations, requests))
    }

    fn context(&self) -> Result<ScenarioContext, CliError> {
        let (net, stations, requests) = self.load_inputs()?;
        ScenarioContext::new(&net, &stations, &requests, self.cfg.experiment.depot_node).map_err(CliError::Data)
    }
}

pub fn generate(run: &Run) -> Result<Vec<PathBuf>, CliError> {
    let g = &run.cfg.generate;
    let (net, stations) =
        generate_grid(g.rows, g.cols, g.block_km, g.speed_kmh, g.n_stations, run.seed(seed_offset::NETWORK))
            .map_err(CliError::Data)?;
    let requests = synth_requests(g.n_requests, g.window_h, &net, run.seed(seed_offset::REQUESTS), &run.cfg.tariff)
        .map_err(CliError::Data)?;
    let dir = run.out_dir()?;
    let files = ["nodes.csv", "arcs.csv", "stations.csv", "requests.csv"].map(|f| dir.join(f));
    net.write_csv(&files[0], &files[1]).map_err(CliError::Data)?;
    write_stations(&files[2], &stations).map_err(CliError::Data)?;
    write_requests(&files[3], &requests).map_err(CliError::Data)?;
    info!("wrote {}x{} grid with {} requests to {}", g.rows, g.cols, requests.len(), dir.display());
    Ok(files.to_vec())
}

/// Solves the whole request file as one scenario.
pub fn solve_instance(run: &Run) -> Result<ScenarioResult, CliError> {
    let ctx = run.context()?;
    let sc = run.cfg.scenario_config();
    let dir = run.out_dir()?;
    let dag = ctx
        .build_dag(&ctx.requests, sc.econ.e_b_max_kwh, sc.heuristic.as_ref())
        .map_err(CliError::Data)?;
    let model = assemble_model(&dag, &sc.econ, &sc.fleet).map_err(CliError::Data)?;
    if run.export_mps {
        let path = dir.join("model.mps");
        export_mps(&model, &path).map_err(CliError::Data)?;
        info!("wrote {}", path.display());
    }
    let (sol, report) = solve(&model, &dag, &sc.solve).map_err(CliError::from_solver)?;
    let result = ScenarioResult {
        scenario_id: 0,
        seed: run.cfg.experiment.seed,
        n_requests: ctx.requests.len(),
        request_ids: dag.ext.requests.iter().map(|r| r.id).collect(),
        metrics: vehicle_metrics(&sol, &dag),
        wall_time_s: report.wall_time_s,
        solution: Some(sol),
        report: Some(report),
        error: None,
    };
    write_json(&dir.join("results.json"), &result).map_err(CliError::Data)?;
    Ok(result)
}

pub fn experiment(run: &Run, kind: ExperimentKind) -> Result<PathBuf, CliError> {
    let e = &run.cfg.experiment;
    let sc = run.cfg.scenario_config();
    let dir = run.out_dir()?;
    match kind {
        ExperimentKind::Sample => {
            let ctx = run.context()?;
            let results =
                run_scenarios(&ctx, e.n_per, e.m, run.seed(seed_offset::SCENARIOS), &sc).map_err(CliError::from_solver)?;
            write_scenario_results(&dir, &results).map_err(CliError::Data)?;
            match aggregate(&results) {
                Ok(stats) => stats.write_csv(&dir.join("aggregate.csv")).map_err(CliError::Data)?,
                Err(err) => warn!("no aggregate written: {err}"),
            }
            Ok(dir)
        }
        ExperimentKind::SizeScan => {
            let ctx = run.context()?;
            let rows = size_scan(&ctx, &e.sizes, e.m, run.seed(seed_offset::SCENARIOS), e.requests_per_vehicle, &sc)
                .map_err(CliError::from_solver)?;
            let path = dir.join("size_scan.csv");
            write_size_scan(&path, &rows).map_err(CliError::Data)?;
            Ok(path)
        }
        ExperimentKind::Sensitivity => {
            let ctx = run.context()?;
            let requests = if e.n_per < ctx.requests.len() {
                sample_subproblem(&ctx.requests, e.n_per, run.seed(seed_offset::SENSITIVITY_SAMPLE))
                    .map_err(CliError::Data)?
            } else {
                ctx.requests.clone()
            };
            let rows =
                battery_sensitivity(&ctx, &requests, &e.e_b_grid, e.quota, &sc).map_err(CliError::from_solver)?;
            let path = dir.join("sensitivity.csv");
            write_sensitivity(&path, &rows).map_err(CliError::Data)?;
            Ok(path)
        }
        ExperimentKind::Lifetime => {
            let econ = run.cfg.econ();
            let model = LifetimeModel::new(&econ).map_err(CliError::Data)?;
            let distance = e.daily_distance_km.unwrap_or_else(|| reference_daily_distance_km(&econ));
            let grid = battery_grid(e.lifetime_grid_start_kwh, e.lifetime_grid_stop_kwh, e.lifetime_grid_step_kwh);
            let rows = cost_curve(&grid, distance, &model).map_err(CliError::Data)?;
            let path = dir.join("lifetime.csv");
            write_cost_curve(&path, &rows).map_err(CliError::Data)?;
            Ok(path)
        }
        ExperimentKind::Overlap => {
            let rows = overlap_table(&e.overlap_n, e.overlap_t_avg_h, e.overlap_t_w_h).map_err(CliError::Data)?;
            let path = dir.join("overlap.csv");
            write_overlap(&path, &rows).map_err(CliError::Data)?;
            Ok(path)
        }
    }
}
