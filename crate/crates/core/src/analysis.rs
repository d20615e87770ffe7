//! Scenario engine and statistics over sampled sub-problems.
//!
//! Scenarios run on a dedicated worker pool; results keep scenario order.
//! Only scenarios solved to optimality enter the aggregates.

use std::path::Path;
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_binomial;

use crate::demand::{sample_subproblem, TravelRequest};
use crate::economics::reference_daily_distance_km;
use crate::error::{EamodError, Result};
use crate::io::{write_csv, write_json, CsvRecord};
use crate::milp::{
    assemble_model, consumption_per_km, EconomicParams, FleetOptions, FleetSolution, SolutionStatus,
};
use crate::road_network::{ChargingStation, MetricTable, NodeId, RoadNetwork};
use crate::solver::{solve, SolveOptions, SolveReport};
use crate::transition_graph::{build_dag_with_table, referenced_nodes, HeuristicThresholds, TransitionDag};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub econ: EconomicParams,
    pub fleet: FleetOptions,
    /// `None` disables the idle-time reduction.
    pub heuristic: Option<HeuristicThresholds>,
    pub solve: SolveOptions,
    /// Worker threads for scenario-level parallelism.
    pub jobs: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            econ: EconomicParams::default(),
            fleet: FleetOptions::default(),
            heuristic: Some(HeuristicThresholds::default()),
            solve: SolveOptions::default(),
            jobs: 1,
        }
    }
}

/// Road data and the full request pool, with fastest paths precomputed
/// between every node the pool can touch.
pub struct ScenarioContext {
    pub requests: Vec<TravelRequest>,
    pub stations: Vec<ChargingStation>,
    pub depot_node: NodeId,
    table: MetricTable,
}

impl ScenarioContext {
    pub fn new(
        net: &RoadNetwork,
        stations: &[ChargingStation],
        requests: &[TravelRequest],
        depot_node: NodeId,
    ) -> Result<Self> {
        if !net.contains(depot_node) {
            return Err(EamodError::UnknownNode(depot_node));
        }
        for s in stations {
            crate::road_network::validate_station(s, net)?;
        }
        let table = MetricTable::build(net, &referenced_nodes(requests, stations, depot_node))?;
        Ok(Self {
            requests: requests.to_vec(),
            stations: stations.to_vec(),
            depot_node,
            table,
        })
    }

    pub fn build_dag(
        &self,
        requests: &[TravelRequest],
        e_b_max_kwh: f64,
        heuristic: Option<&HeuristicThresholds>,
    ) -> Result<TransitionDag> {
        build_dag_with_table(requests, &self.table, &self.stations, self.depot_node, e_b_max_kwh, heuristic)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleMetrics {
    pub vehicle: usize,
    /// Number of charging stops.
    pub stops: usize,
    pub requests_served: usize,
    pub revenue_eur: f64,
    pub avg_charge_per_stop_kwh: f64,
    /// Empty driving including station detours.
    pub rebalancing_km: f64,
    /// Part of `rebalancing_km` spent on station detours.
    pub station_detour_km: f64,
    pub battery_kwh: f64,
}

/// Per used vehicle metrics of `sol` on `dag`.
pub fn vehicle_metrics(sol: &FleetSolution, dag: &TransitionDag) -> Vec<VehicleMetrics> {
    let b = &dag.bounds;
    sol.vehicles
        .iter()
        .enumerate()
        .filter(|(_, v)| v.used)
        .map(|(k, v)| {
            let stops = v.charge_events.len();
            let charged = v.total_charged_kwh();
            let mut rebalancing_km = 0.0;
            let mut station_detour_km = 0.0;
            for w in v.schedule.windows(2) {
                rebalancing_km += b.pair(w[0], w[1]).d_fp;
            }
            for e in &v.charge_events {
                station_detour_km += b.leg(e.after_request, e.before_request, e.station).delta_d_km;
            }
            rebalancing_km += station_detour_km;
            VehicleMetrics {
                vehicle: k,
                stops,
                requests_served: v.requests().count(),
                revenue_eur: v.requests().map(|i| dag.ext.price(i)).sum(),
                avg_charge_per_stop_kwh: if stops == 0 { 0.0 } else { charged / stops as f64 },
                rebalancing_km,
                station_detour_km,
                battery_kwh: v.battery_kwh,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub scenario_id: usize,
    pub seed: u64,
    pub n_requests: usize,
    pub request_ids: Vec<u64>,
    pub solution: Option<FleetSolution>,
    pub report: Option<SolveReport>,
    pub metrics: Vec<VehicleMetrics>,
    pub wall_time_s: f64,
    pub error: Option<String>,
}

impl ScenarioResult {
    /// Solved to proven optimality.
    pub fn is_optimal(&self) -> bool {
        self.solution.as_ref().is_some_and(|s| s.status == SolutionStatus::Optimal)
    }

    pub fn rejection_rate(&self) -> f64 {
        match &self.solution {
            Some(s) if self.n_requests > 0 => 1.0 - s.served_count() as f64 / self.n_requests as f64,
            _ => 0.0,
        }
    }
}

/// Builds, reduces and solves one request subset.
pub fn solve_scenario(
    ctx: &ScenarioContext,
    requests: &[TravelRequest],
    cfg: &ScenarioConfig,
) -> Result<(TransitionDag, FleetSolution, SolveReport)> {
    let dag = ctx.build_dag(requests, cfg.econ.e_b_max_kwh, cfg.heuristic.as_ref())?;
    let model = assemble_model(&dag, &cfg.econ, &cfg.fleet)?;
    let (sol, report) = solve(&model, &dag, &cfg.solve)?;
    Ok((dag, sol, report))
}

fn run_one(ctx: &ScenarioContext, id: usize, seed: u64, n_per: usize, cfg: &ScenarioConfig) -> ScenarioResult {
    let start = Instant::now();
    let mut out = ScenarioResult {
        scenario_id: id,
        seed,
        n_requests: n_per,
        request_ids: Vec::new(),
        solution: None,
        report: None,
        metrics: Vec::new(),
        wall_time_s: 0.0,
        error: None,
    };
    let outcome = sample_subproblem(&ctx.requests, n_per, seed).and_then(|reqs| {
        out.request_ids = reqs.iter().map(|r| r.id).collect();
        solve_scenario(ctx, &reqs, cfg)
    });
    match outcome {
        Ok((dag, sol, report)) => {
            out.metrics = vehicle_metrics(&sol, &dag);
            out.solution = Some(sol);
            out.report = Some(report);
        }
        Err(e) => {
            warn!("scenario {id} failed: {e}");
            out.error = Some(e.to_string());
        }
    }
    out.wall_time_s = start.elapsed().as_secs_f64();
    info!("scenario {id} done in {:.2}s", out.wall_time_s);
    out
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| EamodError::InvalidParameter(format!("worker pool: {e}")))
}

/// Solves `m` sub-problems of `n_per` requests; scenario `i` samples with
/// seed `base_seed + i`. Per-scenario failures are recorded, not raised.
pub fn run_scenarios(
    ctx: &ScenarioContext,
    n_per: usize,
    m: usize,
    base_seed: u64,
    cfg: &ScenarioConfig,
) -> Result<Vec<ScenarioResult>> {
    if m == 0 {
        return Err(EamodError::InvalidParameter("at least one scenario is required".into()));
    }
    if n_per > ctx.requests.len() {
        return Err(EamodError::SampleTooLarge {
            requested: n_per,
            available: ctx.requests.len(),
        });
    }
    let pool = pool(cfg.jobs)?;
    Ok(pool.install(|| {
        (0..m)
            .into_par_iter()
            .map(|i| run_one(ctx, i, base_seed.wrapping_add(i as u64), n_per, cfg))
            .collect()
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub std_dev: f64,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl MetricSummary {
    /// Sample statistics with the `n - 1` denominator; all zero when empty.
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                mean: 0.0,
                std_dev: 0.0,
                min: 0.0,
                max: 0.0,
                count: 0,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Self {
            mean,
            std_dev: var.sqrt(),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            count: n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub metric: String,
    pub mean: f64,
    pub std_dev: f64,
    pub min: f64,
    pub max: f64,
    /// Scenarios contributing at least one used vehicle.
    pub count: usize,
    /// Used vehicles behind the statistics.
    pub vehicles: usize,
}

impl CsvRecord for AggregateRow {
    const HEADER: &'static [&'static str] = &["metric", "mean", "std_dev", "min", "max", "count", "vehicles"];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateStats {
    pub rows: Vec<AggregateRow>,
    pub scenarios_used: usize,
    pub scenarios_excluded: usize,
}

impl AggregateStats {
    pub fn get(&self, metric: &str) -> Option<&AggregateRow> {
        self.rows.iter().find(|r| r.metric == metric)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_csv(path, &self.rows)
    }
}

/// Names of the aggregated per-vehicle metrics, in output order.
pub const AGGREGATE_METRICS: [&str; 5] =
    ["battery_kwh", "stops", "requests_served", "avg_charge_per_stop_kwh", "revenue_eur"];

/// Per-vehicle statistics over the used vehicles of optimal scenarios.
pub fn aggregate(results: &[ScenarioResult]) -> Result<AggregateStats> {
    if results.is_empty() {
        return Err(EamodError::EmptyResults);
    }
    let solved: Vec<&ScenarioResult> = results.iter().filter(|r| r.is_optimal()).collect();
    let contributing = solved.iter().filter(|r| !r.metrics.is_empty()).count();
    let vehicles: Vec<&VehicleMetrics> = solved.iter().flat_map(|r| &r.metrics).collect();
    let column = |f: fn(&VehicleMetrics) -> f64| vehicles.iter().map(|v| f(v)).collect::<Vec<f64>>();
    let columns: [Vec<f64>; 5] = [
        column(|v| v.battery_kwh),
        column(|v| v.stops as f64),
        column(|v| v.requests_served as f64),
        column(|v| v.avg_charge_per_stop_kwh),
        column(|v| v.revenue_eur),
    ];
    Ok(AggregateStats {
        rows: AGGREGATE_METRICS
            .iter()
            .zip(columns.iter())
            .map(|(name, values)| {
                let s = MetricSummary::from_values(values);
                AggregateRow {
                    metric: name.to_string(),
                    mean: s.mean,
                    std_dev: s.std_dev,
                    min: s.min,
                    max: s.max,
                    count: contributing,
                    vehicles: s.count,
                }
            })
            .collect(),
        scenarios_used: solved.len(),
        scenarios_excluded: results.len() - solved.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeScanRow {
    pub size: usize,
    pub k_max: usize,
    pub scenarios_solved: usize,
    pub scenarios_failed: usize,
    pub mean_objective_per_request: f64,
    pub std_objective_per_request: f64,
    pub normalized_objective: f64,
    pub mean_vehicles_per_request: f64,
    pub normalized_vehicles: f64,
    pub rejection_rate: f64,
}

impl CsvRecord for SizeScanRow {
    const HEADER: &'static [&'static str] = &[
        "size",
        "k_max",
        "scenarios_solved",
        "scenarios_failed",
        "mean_objective_per_request",
        "std_objective_per_request",
        "normalized_objective",
        "mean_vehicles_per_request",
        "normalized_vehicles",
        "rejection_rate",
    ];
}

/// Fleet bound for a sub-problem of `size` requests.
pub fn fleet_for_size(size: usize, requests_per_vehicle: usize) -> usize {
    size.div_ceil(requests_per_vehicle.max(1)).max(1)
}

/// Runs `m` scenarios per size and normalizes by the largest size's mean.
///
/// Scenario `i` uses seed `base_seed + i` at every size.
pub fn size_scan(
    ctx: &ScenarioContext,
    sizes: &[usize],
    m: usize,
    base_seed: u64,
    requests_per_vehicle: usize,
    cfg: &ScenarioConfig,
) -> Result<Vec<SizeScanRow>> {
    if sizes.windows(2).any(|w| w[0] > w[1]) {
        return Err(EamodError::InvalidParameter("sizes must be ascending".into()));
    }
    let mut rows = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let mut c = *cfg;
        c.fleet.k_max = fleet_for_size(size, requests_per_vehicle);
        let results = run_scenarios(ctx, size, m, base_seed, &c)?;
        let solved: Vec<&ScenarioResult> = results.iter().filter(|r| r.is_optimal()).collect();
        let per_request = |r: &ScenarioResult, v: f64| if r.n_requests == 0 { 0.0 } else { v / r.n_requests as f64 };
        let objective: Vec<f64> = solved
            .iter()
            .map(|r| per_request(r, r.solution.as_ref().unwrap().objective_eur))
            .collect();
        let vehicles: Vec<f64> = solved
            .iter()
            .map(|r| per_request(r, r.solution.as_ref().unwrap().used_vehicles() as f64))
            .collect();
        let rejection: Vec<f64> = solved.iter().map(|r| r.rejection_rate()).collect();
        let obj = MetricSummary::from_values(&objective);
        rows.push(SizeScanRow {
            size,
            k_max: c.fleet.k_max,
            scenarios_solved: solved.len(),
            scenarios_failed: results.len() - solved.len(),
            mean_objective_per_request: obj.mean,
            std_objective_per_request: obj.std_dev,
            normalized_objective: 0.0,
            mean_vehicles_per_request: MetricSummary::from_values(&vehicles).mean,
            normalized_vehicles: 0.0,
            rejection_rate: MetricSummary::from_values(&rejection).mean,
        });
    }
    if let Some(last) = rows.last().copied() {
        let norm = |v: f64, base: f64| if base == 0.0 { 0.0 } else { v / base.abs() };
        for r in &mut rows {
            r.normalized_objective = norm(r.mean_objective_per_request, last.mean_objective_per_request);
            r.normalized_vehicles = norm(r.mean_vehicles_per_request, last.mean_vehicles_per_request);
        }
    }
    Ok(rows)
}

/// Spearman rank correlation with average ranks for ties; NaN when either
/// side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    }
    assert_eq!(x.len(), y.len(), "spearman needs equal lengths");
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointStatus {
    Optimal,
    Feasible,
    TimeLimit,
    InfeasibleQuota,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub e_b_kwh: f64,
    pub status: PointStatus,
    pub tau_v_days: f64,
    pub objective_eur: f64,
    pub fixed_cost_eur: f64,
    pub energy_cost_eur: f64,
    pub revenue_eur: f64,
    pub fleet_size: usize,
    pub served: usize,
    pub total_energy_kwh: f64,
    pub station_detour_km: f64,
    pub rebalancing_km: f64,
}

impl CsvRecord for SensitivityRow {
    const HEADER: &'static [&'static str] = &[
        "e_b_kwh",
        "status",
        "tau_v_days",
        "objective_eur",
        "fixed_cost_eur",
        "energy_cost_eur",
        "revenue_eur",
        "fleet_size",
        "served",
        "total_energy_kwh",
        "station_detour_km",
        "rebalancing_km",
    ];
}

/// Write-off horizon of a vehicle with an `e_b_kwh` battery driving the
/// reference daily distance.
pub fn battery_lifetime_days(e_b_kwh: f64, econ: &EconomicParams) -> f64 {
    let daily_energy = reference_daily_distance_km(econ) * consumption_per_km(e_b_kwh, econ);
    econ.tau_cycle * e_b_kwh / daily_energy
}

/// Economics of one sensitivity grid point: battery fixed at `e_b_kwh`,
/// write-off horizon from the battery's cycle life, half-charged at the
/// depot.
pub fn sensitivity_economics(e_b_kwh: f64, base: &EconomicParams) -> EconomicParams {
    EconomicParams {
        tau_v_days: battery_lifetime_days(e_b_kwh, base),
        e_b_max_kwh: e_b_kwh,
        e_b0_kwh: e_b_kwh / 2.0,
        ..*base
    }
}

/// Solves `requests` once per battery size with the battery fixed and at
/// least `served_quota` requests served. An unattainable quota is reported
/// on its grid point and the scan continues.
pub fn battery_sensitivity(
    ctx: &ScenarioContext,
    requests: &[TravelRequest],
    e_b_grid: &[f64],
    served_quota: usize,
    cfg: &ScenarioConfig,
) -> Result<Vec<SensitivityRow>> {
    if e_b_grid.iter().any(|&e| !(e > 0.0)) || e_b_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(EamodError::InvalidParameter("battery grid must be positive and ascending".into()));
    }
    let pool = pool(cfg.jobs)?;
    Ok(pool.install(|| {
        e_b_grid
            .par_iter()
            .map(|&e_b| sensitivity_point(ctx, requests, e_b, served_quota, cfg))
            .collect()
    }))
}

fn sensitivity_point(
    ctx: &ScenarioContext,
    requests: &[TravelRequest],
    e_b: f64,
    served_quota: usize,
    cfg: &ScenarioConfig,
) -> SensitivityRow {
    let econ = sensitivity_economics(e_b, &cfg.econ);
    let mut c = *cfg;
    c.econ = econ;
    c.fleet.fixed_battery_kwh = Some(e_b);
    c.fleet.served_quota = Some(served_quota);
    let mut row = SensitivityRow {
        e_b_kwh: e_b,
        status: PointStatus::Failed,
        tau_v_days: econ.tau_v_days,
        objective_eur: f64::NAN,
        fixed_cost_eur: f64::NAN,
        energy_cost_eur: f64::NAN,
        revenue_eur: f64::NAN,
        fleet_size: 0,
        served: 0,
        total_energy_kwh: f64::NAN,
        station_detour_km: f64::NAN,
        rebalancing_km: f64::NAN,
    };
    match solve_scenario(ctx, requests, &c) {
        Ok((dag, sol, _)) => {
            let metrics = vehicle_metrics(&sol, &dag);
            let fleet = sol.used_vehicles();
            let energy = sol.total_charged_kwh();
            let revenue: f64 = metrics.iter().map(|m| m.revenue_eur).sum();
            row.status = match sol.status {
                SolutionStatus::Optimal => PointStatus::Optimal,
                SolutionStatus::TimeLimit => PointStatus::TimeLimit,
                _ => PointStatus::Feasible,
            };
            row.fixed_cost_eur = fixed_cost(fleet, e_b, &econ);
            row.energy_cost_eur = econ.p_el_eur_per_kwh * energy;
            row.revenue_eur = revenue;
            row.objective_eur = row.fixed_cost_eur + row.energy_cost_eur - revenue;
            row.fleet_size = fleet;
            row.served = sol.served_count();
            row.total_energy_kwh = energy;
            row.station_detour_km = metrics.iter().map(|m| m.station_detour_km).sum();
            row.rebalancing_km = metrics.iter().map(|m| m.rebalancing_km).sum();
        }
        Err(EamodError::InfeasibleQuota { .. }) | Err(EamodError::Infeasible) => {
            row.status = PointStatus::InfeasibleQuota;
        }
        Err(EamodError::TimeLimit) => row.status = PointStatus::TimeLimit,
        Err(e) => warn!("sensitivity point {e_b} kWh failed: {e}"),
    }
    row
}

/// Daily write-off of `fleet` vehicles with `e_b_kwh` batteries.
pub fn fixed_cost(fleet: usize, e_b_kwh: f64, econ: &EconomicParams) -> f64 {
    fleet as f64 * (econ.p_v_eur + econ.p_b_eur_per_kwh * e_b_kwh) / econ.tau_v_days
}

/// Probability that exactly `k` of `n` trips of mean length `t_avg_h`,
/// uniformly placed in a window of `t_w_h`, overlap a given instant.
pub fn overlap_probability(n: u64, k: u64, t_avg_h: f64, t_w_h: f64) -> Result<f64> {
    if k > n {
        return Err(EamodError::DomainError(format!("k = {k} exceeds n = {n}")));
    }
    if !(t_avg_h > 0.0 && t_avg_h <= t_w_h && t_w_h.is_finite()) {
        return Err(EamodError::DomainError("need 0 < t_avg <= t_w".into()));
    }
    let p = t_avg_h / t_w_h;
    if p == 1.0 {
        return Ok(if k == n { 1.0 } else { 0.0 });
    }
    let ln = ln_binomial(n, k) + k as f64 * p.ln() + (n - k) as f64 * (-p).ln_1p();
    Ok(ln.exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapRow {
    pub n: u64,
    pub k: u64,
    pub probability: f64,
}

impl CsvRecord for OverlapRow {
    const HEADER: &'static [&'static str] = &["n", "k", "probability"];
}

/// Full distribution for every `n` in `ns`.
pub fn overlap_table(ns: &[u64], t_avg_h: f64, t_w_h: f64) -> Result<Vec<OverlapRow>> {
    let mut rows = Vec::new();
    for &n in ns {
        for k in 0..=n {
            rows.push(OverlapRow {
                n,
                k,
                probability: overlap_probability(n, k, t_avg_h, t_w_h)?,
            });
        }
    }
    Ok(rows)
}

/// Writes `scenario_<id>/results.json` for every scenario.
pub fn write_scenario_results(dir: &Path, results: &[ScenarioResult]) -> Result<()> {
    for r in results {
        let sub = dir.join(format!("scenario_{:03}", r.scenario_id));
        std::fs::create_dir_all(&sub).map_err(|e| EamodError::io(&sub, e))?;
        write_json(&sub.join("results.json"), r)?;
    }
    Ok(())
}

pub fn write_size_scan(path: &Path, rows: &[SizeScanRow]) -> Result<()> {
    write_csv(path, rows)
}

pub fn write_sensitivity(path: &Path, rows: &[SensitivityRow]) -> Result<()> {
    write_csv(path, rows)
}

pub fn write_overlap(path: &Path, rows: &[OverlapRow]) -> Result<()> {
    write_csv(path, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::{synth_requests, Tariff};
    use crate::road_network::generate_grid;

    fn ctx(n: usize, seed: u64) -> ScenarioContext {
        let (net, st) = generate_grid(3, 3, 1.0, 20.0, 1, seed).unwrap();
        let reqs = synth_requests(n, 2.0, &net, seed, &Tariff::default()).unwrap();
        ScenarioContext::new(&net, &st, &reqs, 4).unwrap()
    }

    #[test]
    fn overlap_examples() {
        assert!((overlap_probability(1, 1, 0.25, 3.0).unwrap() - 1.0 / 12.0).abs() < 1e-12);
        let p = 1.0 / 12.0;
        assert!((overlap_probability(2, 1, 0.25, 3.0).unwrap() - 2.0 * p * (1.0 - p)).abs() < 1e-12);
        let total: f64 = (0..=1000).map(|k| overlap_probability(1000, k, 0.25, 3.0).unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-9);
        assert_eq!(overlap_probability(3, 3, 1.0, 1.0).unwrap(), 1.0);
        assert_eq!(overlap_probability(3, 2, 1.0, 1.0).unwrap(), 0.0);
        assert!(matches!(overlap_probability(1, 2, 0.25, 3.0), Err(EamodError::DomainError(_))));
        assert!(matches!(overlap_probability(1, 1, 4.0, 3.0), Err(EamodError::DomainError(_))));
    }

    #[test]
    fn overlap_mode() {
        let p: f64 = 0.25 / 3.0;
        for n in [1u64, 7, 50, 333, 2000] {
            let probs: Vec<f64> = (0..=n).map(|k| overlap_probability(n, k, 0.25, 3.0).unwrap()).collect();
            let mode = probs
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0 as u64;
            assert_eq!(mode, ((n + 1) as f64 * p).floor() as u64, "n = {n}");
        }
    }

    #[test]
    fn summary_examples() {
        let s = MetricSummary::from_values(&[10.0, 20.0]);
        assert_eq!(s.mean, 15.0);
        assert!((s.std_dev - 7.0710678118654755).abs() < 1e-12);
        assert_eq!(MetricSummary::from_values(&[3.0]).std_dev, 0.0);
        assert!(matches!(aggregate(&[]), Err(EamodError::EmptyResults)));
    }

    #[test]
    fn spearman_examples() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[1.0, 5.0, 9.0]) - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[1.0, 1.0, 2.0]) - 0.8660254037844387).abs() < 1e-12);
    }

    #[test]
    fn empty_scenario_is_zero() {
        let c = ctx(6, 1);
        let r = run_scenarios(&c, 0, 1, 0, &ScenarioConfig::default()).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].solution.as_ref().unwrap().objective_eur, 0.0);
        let agg = aggregate(&r).unwrap();
        assert_eq!(agg.rows.len(), 5);
        assert!(agg.rows.iter().all(|row| row.count == 0 && row.vehicles == 0));
    }

    #[test]
    fn seeds_are_offset_per_scenario() {
        let c = ctx(30, 2);
        let r = run_scenarios(&c, 3, 3, 7, &ScenarioConfig::default()).unwrap();
        let seeds: Vec<u64> = r.iter().map(|s| s.seed).collect();
        assert_eq!(seeds, vec![7, 8, 9]);
        assert_ne!(r[0].request_ids, r[1].request_ids);
        assert_ne!(r[1].request_ids, r[2].request_ids);
        assert_ne!(r[0].request_ids, r[2].request_ids);
        assert!(matches!(
            run_scenarios(&c, 31, 1, 0, &ScenarioConfig::default()),
            Err(EamodError::SampleTooLarge { .. })
        ));
    }

    #[test]
    fn lifetime_at_reference_battery() {
        let econ = EconomicParams::default();
        assert!((battery_lifetime_days(20.0, &econ) - econ.tau_v_days).abs() < 1e-9);
        let per_vehicle = |e: f64| fixed_cost(1, e, &sensitivity_economics(e, &econ));
        assert!((per_vehicle(20.0) - 13.2).abs() < 1e-9);
        assert!(per_vehicle(5.0) > per_vehicle(10.0));
        assert!(per_vehicle(10.0) > per_vehicle(20.0));
        assert!(per_vehicle(40.0) > per_vehicle(20.0));
        assert!(per_vehicle(60.0) > per_vehicle(40.0));
    }

    #[test]
    fn zero_quota_serves_nothing() {
        let (net, st) = generate_grid(3, 3, 1.0, 20.0, 1, 3).unwrap();
        let free = Tariff {
            alpha_eur: 0.0,
            beta_eur_per_km: 0.0,
            gamma_eur_per_min: 0.0,
        };
        let reqs = synth_requests(4, 2.0, &net, 3, &free).unwrap();
        let c = ScenarioContext::new(&net, &st, &reqs, 4).unwrap();
        let grid = [5.0, 10.0, 20.0, 40.0, 60.0];
        let rows = battery_sensitivity(&c, &c.requests, &grid, 0, &ScenarioConfig::default()).unwrap();
        for r in &rows {
            assert_eq!(r.status, PointStatus::Optimal);
            assert_eq!(r.objective_eur, 0.0);
            assert_eq!(r.fleet_size, 0);
        }
    }

    #[test]
    fn small_battery_cannot_meet_quota() {
        // Depot in one corner, the request 40 km away in the other.
        let (net, _st) = generate_grid(3, 3, 10.0, 20.0, 0, 0).unwrap();
        let tariff = Tariff::default();
        let mut req = synth_requests(1, 1.0, &net, 0, &tariff).unwrap().remove(0);
        let p = crate::road_network::fastest_path(&net, 8, 5).unwrap();
        req.origin = 8;
        req.destination = 5;
        req.start_time_h = 5.0;
        req.service_time_h = p.time_h;
        req.service_distance_km = p.distance_km;
        req.end_time_h = 5.0 + p.time_h;
        req.price_eur = crate::demand::price(p.distance_km, p.time_h, &tariff);
        let station = crate::road_network::ChargingStation {
            id: 0,
            node: 0,
            power_kw: crate::road_network::DEFAULT_CHARGER_KW,
        };
        let c = ScenarioContext::new(&net, &[station], &[req], 0).unwrap();
        let rows = battery_sensitivity(&c, &c.requests, &[2.0, 20.0], 1, &ScenarioConfig::default()).unwrap();
        assert_eq!(rows[0].status, PointStatus::InfeasibleQuota);
        assert_eq!(rows[1].status, PointStatus::Optimal);
        assert_eq!(rows[1].served, 1);
    }
}
