//! Run configuration: one JSON document, every key optional.

use std::path::{Path, PathBuf};

use eamod::analysis::ScenarioConfig;
use eamod::demand::Tariff;
use eamod::milp::{EconomicParams, FleetOptions};
use eamod::solver::SolveOptions;
use eamod::transition_graph::{HeuristicThresholds, OverThreshold};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub nodes: PathBuf,
    pub arcs: PathBuf,
    pub stations: PathBuf,
    pub requests: PathBuf,
    pub output_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            nodes: "data/nodes.csv".into(),
            arcs: "data/arcs.csv".into(),
            stations: "data/stations.csv".into(),
            requests: "data/requests.csv".into(),
            output_dir: "out".into(),
        }
    }
}

/// Cost and consumption parameters; battery limits live in the fleet block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Economics {
    pub p_v_eur: f64,
    pub p_b_eur_per_kwh: f64,
    pub p_el_eur_per_kwh: f64,
    pub tau_v_days: f64,
    pub tau_cycle: f64,
    pub delta_e0_kwh_per_km: f64,
    pub delta_eb_per_km: f64,
}

impl Default for Economics {
    fn default() -> Self {
        let e = EconomicParams::default();
        Self {
            p_v_eur: e.p_v_eur,
            p_b_eur_per_kwh: e.p_b_eur_per_kwh,
            p_el_eur_per_kwh: e.p_el_eur_per_kwh,
            tau_v_days: e.tau_v_days,
            tau_cycle: e.tau_cycle,
            delta_e0_kwh_per_km: e.delta_e0_kwh_per_km,
            delta_eb_per_km: e.delta_eb_per_km,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Fleet {
    pub k_max: usize,
    pub e_b_max_kwh: f64,
    pub e_b0_kwh: f64,
    pub homogeneous: bool,
    /// Forces every used battery to this size; `null` leaves it free.
    pub fixed_battery_kwh: Option<f64>,
    /// Minimum served requests for `solve`; `null` means no quota.
    pub served_quota: Option<usize>,
}

impl Default for Fleet {
    fn default() -> Self {
        let e = EconomicParams::default();
        let f = FleetOptions::default();
        Self {
            k_max: f.k_max,
            e_b_max_kwh: e.e_b_max_kwh,
            e_b0_kwh: e.e_b0_kwh,
            homogeneous: f.homogeneous,
            fixed_battery_kwh: f.fixed_battery_kwh,
            served_quota: f.served_quota,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Heuristic {
    pub enabled: bool,
    pub max_idle_h: f64,
    pub max_detour_h: f64,
    pub max_deadhead_h: f64,
    pub daily_energy_kwh: f64,
    pub over_threshold: OverThreshold,
}

impl Default for Heuristic {
    fn default() -> Self {
        let h = HeuristicThresholds::default();
        Self {
            enabled: true,
            max_idle_h: h.max_idle_h,
            max_detour_h: h.max_detour_h,
            max_deadhead_h: h.max_deadhead_h,
            daily_energy_kwh: h.daily_energy_kwh,
            over_threshold: h.over_threshold,
        }
    }
}

/// Synthetic instance generator settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Generate {
    pub rows: usize,
    pub cols: usize,
    pub block_km: f64,
    pub speed_kmh: f64,
    pub n_stations: usize,
    pub n_requests: usize,
    pub window_h: f64,
}

impl Default for Generate {
    fn default() -> Self {
        Self {
            rows: 10,
            cols: 10,
            block_km: 1.0,
            speed_kmh: 20.0,
            n_stations: 5,
            n_requests: 250,
            window_h: 24.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Experiment {
    /// Root of all randomness; see the README for the per-purpose offsets.
    pub seed: u64,
    pub depot_node: u64,
    pub m: usize,
    pub n_per: usize,
    pub sizes: Vec<usize>,
    pub requests_per_vehicle: usize,
    pub e_b_grid: Vec<f64>,
    pub quota: usize,
    pub lifetime_grid_start_kwh: f64,
    pub lifetime_grid_stop_kwh: f64,
    pub lifetime_grid_step_kwh: f64,
    /// Daily distance for the lifetime curve; `null` uses the reference distance.
    pub daily_distance_km: Option<f64>,
    pub overlap_n: Vec<u64>,
    pub overlap_t_avg_h: f64,
    pub overlap_t_w_h: f64,
}

impl Default for Experiment {
    fn default() -> Self {
        Self {
            seed: 0,
            depot_node: 0,
            m: 25,
            n_per: 250,
            sizes: vec![25, 50, 125, 250],
            requests_per_vehicle: 25,
            e_b_grid: vec![5.0, 10.0, 20.0, 40.0, 60.0],
            quota: 0,
            lifetime_grid_start_kwh: 0.1,
            lifetime_grid_stop_kwh: 100.0,
            lifetime_grid_step_kwh: 0.1,
            daily_distance_km: None,
            overlap_n: vec![250, 500, 1000],
            overlap_t_avg_h: 0.25,
            overlap_t_w_h: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub paths: Paths,
    pub economics: Economics,
    pub fleet: Fleet,
    pub heuristic: Heuristic,
    pub solver: SolveOptions,
    pub tariff: Tariff,
    pub generate: Generate,
    pub experiment: Experiment,
    /// Worker threads for scenario-level parallelism.
    pub jobs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            paths: Paths::default(),
            economics: Economics::default(),
            fleet: Fleet::default(),
            heuristic: Heuristic::default(),
            solver: SolveOptions::default(),
            tariff: Tariff::default(),
            generate: Generate::default(),
            experiment: Experiment::default(),
            jobs: 1,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| CliError::Config {
            key: e.path().to_string(),
            msg: e.inner().to_string(),
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config {
            key: "--config".into(),
            msg: format!("{}: {e}", path.display()),
        })?;
        Self::from_json(&text)
    }

    pub fn econ(&self) -> EconomicParams {
        let e = &self.economics;
        EconomicParams {
            p_v_eur: e.p_v_eur,
            p_b_eur_per_kwh: e.p_b_eur_per_kwh,
            p_el_eur_per_kwh: e.p_el_eur_per_kwh,
            tau_v_days: e.tau_v_days,
            tau_cycle: e.tau_cycle,
            delta_e0_kwh_per_km: e.delta_e0_kwh_per_km,
            delta_eb_per_km: e.delta_eb_per_km,
            e_b_max_kwh: self.fleet.e_b_max_kwh,
            e_b0_kwh: self.fleet.e_b0_kwh,
        }
    }

    pub fn fleet_options(&self) -> FleetOptions {
        FleetOptions {
            k_max: self.fleet.k_max,
            homogeneous: self.fleet.homogeneous,
            fixed_battery_kwh: self.fleet.fixed_battery_kwh,
            served_quota: self.fleet.served_quota,
        }
    }

    pub fn thresholds(&self) -> Option<HeuristicThresholds> {
        let h = &self.heuristic;
        h.enabled.then_some(HeuristicThresholds {
            max_idle_h: h.max_idle_h,
            max_detour_h: h.max_detour_h,
            max_deadhead_h: h.max_deadhead_h,
            daily_energy_kwh: h.daily_energy_kwh,
            over_threshold: h.over_threshold,
        })
    }

    pub fn scenario_config(&self) -> ScenarioConfig {
        ScenarioConfig {
            econ: self.econ(),
            fleet: self.fleet_options(),
            heuristic: self.thresholds(),
            solve: self.solver,
            jobs: self.jobs.max(1),
        }
    }

    /// Range checks, reported against the owning block.
    pub fn validate(&self) -> Result<(), CliError> {
        let block = |key: &'static str| move |e: eamod::EamodError| CliError::Config {
            key: key.into(),
            msg: e.to_string(),
        };
        self.econ().validate().map_err(block("economics"))?;
        self.fleet_options().validate(&self.econ()).map_err(block("fleet"))?;
        if let Some(t) = self.thresholds() {
            t.validate().map_err(block("heuristic"))?;
        }
        self.solver.validate().map_err(block("solver"))?;
        self.tariff.validate().map_err(block("tariff"))?;
        if self.jobs == 0 {
            return Err(CliError::Config {
                key: "jobs".into(),
                msg: "must be at least 1".into(),
            });
        }
        Ok(())
    }
}

/// `key = default` lines for every leaf of the default configuration.
pub fn documented_keys() -> Vec<String> {
    fn walk(prefix: &str, v: &Value, out: &mut Vec<String>) {
        match v {
            Value::Object(map) => {
                for (k, child) in map {
                    let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                    walk(&key, child, out);
                }
            }
            leaf => out.push(format!("{prefix} = {leaf}")),
        }
    }
    let mut out = Vec::new();
    let v = serde_json::to_value(RunConfig::default()).expect("default config serializes");
    walk("", &v, &mut out);
    out
}
