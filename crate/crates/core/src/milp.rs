//! Joint fleet-sizing, battery-sizing and charge-scheduling MILP.
//!
//! Assembles the sparse model over a [`TransitionDag`], extracts fleet plans
//! from solver output and verifies plans against every constraint family
//! without going through the model.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use eamod_lp::{LinearProblem, Sense};
use serde::{Deserialize, Serialize};

use crate::error::{EamodError, Result};
use crate::transition_graph::{ExtendedRequestSet, TransitionDag};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EconomicParams {
    pub p_v_eur: f64,
    pub p_b_eur_per_kwh: f64,
    pub p_el_eur_per_kwh: f64,
    pub tau_v_days: f64,
    pub tau_cycle: f64,
    pub delta_e0_kwh_per_km: f64,
    pub delta_eb_per_km: f64,
    pub e_b_max_kwh: f64,
    pub e_b0_kwh: f64,
}

/// Daily energy and reference battery behind the default write-off horizon.
pub const REFERENCE_DAILY_ENERGY_KWH: f64 = 30.0;
pub const REFERENCE_BATTERY_KWH: f64 = 20.0;

impl Default for EconomicParams {
    fn default() -> Self {
        let tau_cycle = 2500.0;
        Self {
            p_v_eur: 8000.0,
            p_b_eur_per_kwh: 700.0,
            p_el_eur_per_kwh: 0.30,
            tau_v_days: tau_cycle / (REFERENCE_DAILY_ENERGY_KWH / REFERENCE_BATTERY_KWH),
            tau_cycle,
            delta_e0_kwh_per_km: 0.09,
            delta_eb_per_km: 0.0025,
            e_b_max_kwh: 80.0,
            e_b0_kwh: 10.0,
        }
    }
}

impl EconomicParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("p_v_eur", self.p_v_eur),
            ("p_b_eur_per_kwh", self.p_b_eur_per_kwh),
            ("p_el_eur_per_kwh", self.p_el_eur_per_kwh),
            ("tau_v_days", self.tau_v_days),
            ("tau_cycle", self.tau_cycle),
            ("delta_e0_kwh_per_km", self.delta_e0_kwh_per_km),
            ("delta_eb_per_km", self.delta_eb_per_km),
            ("e_b_max_kwh", self.e_b_max_kwh),
            ("e_b0_kwh", self.e_b0_kwh),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(EamodError::InvalidParameter(format!("{name} must be a non-negative number")));
            }
        }
        if self.tau_v_days <= 0.0 || self.tau_cycle <= 0.0 || self.e_b_max_kwh <= 0.0 {
            return Err(EamodError::InvalidParameter(
                "tau_v_days, tau_cycle and e_b_max_kwh must be positive".into(),
            ));
        }
        if self.e_b0_kwh > self.e_b_max_kwh {
            return Err(EamodError::InvalidParameter("e_b0_kwh must not exceed e_b_max_kwh".into()));
        }
        Ok(())
    }

    /// Consumption per km at the largest battery.
    pub fn max_consumption_per_km(&self) -> f64 {
        consumption_per_km(self.e_b_max_kwh, self)
    }
}

/// Consumption in kWh/km of a vehicle carrying an `e_b_kwh` battery.
pub fn consumption_per_km(e_b_kwh: f64, econ: &EconomicParams) -> f64 {
    econ.delta_e0_kwh_per_km + econ.delta_eb_per_km * e_b_kwh
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FleetOptions {
    pub k_max: usize,
    pub homogeneous: bool,
    /// Forces every used battery to this size.
    pub fixed_battery_kwh: Option<f64>,
    /// Minimum number of served requests.
    pub served_quota: Option<usize>,
}

impl Default for FleetOptions {
    fn default() -> Self {
        Self {
            k_max: 1,
            homogeneous: true,
            fixed_battery_kwh: None,
            served_quota: None,
        }
    }
}

impl FleetOptions {
    pub fn validate(&self, econ: &EconomicParams) -> Result<()> {
        if self.k_max == 0 {
            return Err(EamodError::InvalidParameter("k_max must be at least 1".into()));
        }
        if let Some(f) = self.fixed_battery_kwh {
            if !(f > 0.0 && f <= econ.e_b_max_kwh) {
                return Err(EamodError::InvalidParameter(
                    "fixed_battery_kwh must lie in (0, e_b_max_kwh]".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Constraint families shared by the model rows and the feasibility checker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ConstraintFamily {
    /// A transition or charging option outside the DAG bounds.
    Transition,
    Continuity,
    MaxOnce,
    ServedLink,
    /// Charging only on an active transition, one station at most.
    ChargeLink,
    ChargeBound,
    /// Consumption of a transition with or without a station detour.
    TransitEnergy,
    EnergyBalance,
    BatteryBound,
    Initialization,
    Usage,
    VehicleOrder,
    Homogeneous,
    BatteryFixed,
    Quota,
    /// Fleet-wide totals of per-vehicle binaries.
    Aggregation,
}

impl fmt::Display for ConstraintFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Semantic key of a model column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VarKey {
    Link { i: usize, j: usize, k: usize },
    Stop { i: usize, j: usize, c: usize, k: usize },
    Charge { i: usize, j: usize, c: usize, k: usize },
    TransitEnergy { i: usize, j: usize, k: usize },
    Level { j: usize, k: usize },
    Battery { k: usize },
    Used { k: usize },
    Served { i: usize },
    /// Number of vehicles using transition `(i, j)`; multi-vehicle models only.
    Flow { i: usize, j: usize },
    /// Number of vehicles used; multi-vehicle models only.
    Fleet,
}

impl VarKey {
    fn name(&self) -> String {
        match *self {
            VarKey::Link { i, j, k } => format!("link[{i},{j},{k}]"),
            VarKey::Stop { i, j, c, k } => format!("stop[{i},{j},{c},{k}]"),
            VarKey::Charge { i, j, c, k } => format!("charge[{i},{j},{c},{k}]"),
            VarKey::TransitEnergy { i, j, k } => format!("transit[{i},{j},{k}]"),
            VarKey::Level { j, k } => format!("level[{j},{k}]"),
            VarKey::Battery { k } => format!("battery[{k}]"),
            VarKey::Used { k } => format!("used[{k}]"),
            VarKey::Served { i } => format!("served[{i}]"),
            VarKey::Flow { i, j } => format!("flow[{i},{j}]"),
            VarKey::Fleet => "fleet".to_string(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MilpModel {
    pub problem: LinearProblem,
    pub keys: Vec<VarKey>,
    pub row_families: Vec<ConstraintFamily>,
    /// Largest energy-balance big-M.
    pub big_m_energy: f64,
    pub k_max: usize,
    pub options: FleetOptions,
    pub econ: EconomicParams,
    index: HashMap<VarKey, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelStats {
    pub variables: usize,
    pub binaries: usize,
    pub rows: usize,
    pub variables_by_kind: BTreeMap<String, usize>,
    pub rows_by_family: BTreeMap<String, usize>,
    pub big_m_energy: f64,
}

impl MilpModel {
    pub fn var(&self, key: VarKey) -> Option<usize> {
        self.index.get(&key).copied()
    }

    pub fn stats(&self) -> ModelStats {
        let mut variables_by_kind = BTreeMap::new();
        for key in &self.keys {
            let kind = match key {
                VarKey::Link { .. } => "link",
                VarKey::Stop { .. } => "stop",
                VarKey::Charge { .. } => "charge",
                VarKey::TransitEnergy { .. } => "transit_energy",
                VarKey::Level { .. } => "level",
                VarKey::Battery { .. } => "battery",
                VarKey::Used { .. } => "used",
                VarKey::Served { .. } => "served",
                VarKey::Flow { .. } => "flow",
                VarKey::Fleet => "fleet",
            };
            *variables_by_kind.entry(kind.to_string()).or_insert(0) += 1;
        }
        let mut rows_by_family = BTreeMap::new();
        for f in &self.row_families {
            *rows_by_family.entry(f.to_string()).or_insert(0) += 1;
        }
        ModelStats {
            variables: self.problem.num_vars(),
            binaries: self.problem.vars.iter().filter(|v| v.integer).count(),
            rows: self.problem.num_rows(),
            variables_by_kind,
            rows_by_family,
            big_m_energy: self.big_m_energy,
        }
    }

    /// Whether column `j` is a link or stop binary.
    pub fn is_routing_binary(&self, j: usize) -> bool {
        matches!(self.keys[j], VarKey::Link { .. } | VarKey::Stop { .. })
    }

    /// Branching priority of column `j`: fleet-wide decisions first.
    pub fn branch_priority(&self, j: usize) -> u8 {
        match self.keys[j] {
            VarKey::Fleet => 3,
            VarKey::Served { .. } | VarKey::Flow { .. } => 2,
            VarKey::Used { .. } => 1,
            _ => 0,
        }
    }
}

struct Builder {
    problem: LinearProblem,
    keys: Vec<VarKey>,
    index: HashMap<VarKey, usize>,
    families: Vec<ConstraintFamily>,
}

impl Builder {
    fn var(&mut self, key: VarKey, lo: f64, hi: f64, cost: f64, integer: bool) -> usize {
        let j = self.problem.add_var(key.name(), lo, hi, cost, integer);
        self.keys.push(key);
        self.index.insert(key, j);
        j
    }

    fn row(&mut self, family: ConstraintFamily, tag: String, coeffs: Vec<(usize, f64)>, sense: Sense, rhs: f64) {
        self.problem.add_row(format!("{family}[{tag}]"), coeffs, sense, rhs);
        self.families.push(family);
    }

    fn get(&self, key: VarKey) -> usize {
        self.index[&key]
    }
}

/// Builds the MILP for up to `opts.k_max` vehicles.
///
/// Columns exist only where the DAG bounds allow them. With no requests the
/// model still holds the idle fleet and its optimum is 0.
pub fn assemble_model(dag: &TransitionDag, econ: &EconomicParams, opts: &FleetOptions) -> Result<MilpModel> {
    econ.validate()?;
    opts.validate(econ)?;
    use ConstraintFamily as F;
    use VarKey as V;

    let ext = &dag.ext;
    let bounds = &dag.bounds;
    let size = ext.len();
    let end = ext.end_depot();
    let n = ext.num_requests();
    let k_max = opts.k_max;
    let e_max = econ.e_b_max_kwh;
    let rate_max = econ.max_consumption_per_km();
    let pairs: Vec<(usize, usize)> = bounds.feasible_pairs().collect();
    let options: HashMap<(usize, usize), Vec<usize>> = pairs
        .iter()
        .map(|&(i, j)| ((i, j), bounds.charge_options(i, j).collect()))
        .collect();
    let max_cap = (0..size)
        .flat_map(|i| (0..size).map(move |j| (i, j)))
        .flat_map(|(i, j)| (0..bounds.n_stations()).map(move |c| bounds.leg(i, j, c).c_ub))
        .fold(0.0, f64::max);

    let mut b = Builder {
        problem: LinearProblem::new(),
        keys: Vec::new(),
        index: HashMap::new(),
        families: Vec::new(),
    };

    // Columns.
    for k in 0..k_max {
        b.var(V::Used { k }, 0.0, 1.0, econ.p_v_eur / econ.tau_v_days, true);
        b.var(V::Battery { k }, 0.0, e_max, econ.p_b_eur_per_kwh / econ.tau_v_days, false);
        for j in 0..size {
            b.var(V::Level { j, k }, 0.0, e_max, 0.0, false);
        }
        for &(i, j) in &pairs {
            b.var(V::Link { i, j, k }, 0.0, 1.0, 0.0, true);
            let d = bounds.pair(i, j).d_fp;
            let extra = options[&(i, j)]
                .iter()
                .map(|&c| bounds.leg(i, j, c).delta_d_km)
                .fold(0.0, f64::max);
            b.var(V::TransitEnergy { i, j, k }, 0.0, rate_max * (d + extra), 0.0, false);
            for &c in &options[&(i, j)] {
                b.var(V::Stop { i, j, c, k }, 0.0, 1.0, 0.0, true);
                let cap = bounds.leg(i, j, c).c_ub;
                b.var(V::Charge { i, j, c, k }, 0.0, cap, econ.p_el_eur_per_kwh, false);
            }
        }
    }
    for i in 1..=n {
        b.var(V::Served { i }, 0.0, 1.0, -ext.price(i), true);
    }
    if k_max > 1 {
        b.var(V::Fleet, 0.0, k_max as f64, 0.0, true);
        for &(i, j) in &pairs {
            let hi = if i == 0 && j == end { k_max as f64 } else { 1.0 };
            b.var(V::Flow { i, j }, 0.0, hi, 0.0, true);
        }
    }

    let mut big_m_energy: f64 = 0.0;
    for k in 0..k_max {
        let used = b.get(V::Used { k });
        let battery = b.get(V::Battery { k });
        let level = |b: &Builder, j: usize| b.get(V::Level { j, k });

        for &(i, j) in &pairs {
            let link = b.get(V::Link { i, j, k });
            let transit = b.get(V::TransitEnergy { i, j, k });
            let opts_ij = &options[&(i, j)];
            let stops: Vec<usize> = opts_ij.iter().map(|&c| b.get(V::Stop { i, j, c, k })).collect();
            let charges: Vec<usize> = opts_ij.iter().map(|&c| b.get(V::Charge { i, j, c, k })).collect();
            let tag = format!("{i},{j},{k}");

            if !stops.is_empty() {
                let mut coeffs: Vec<(usize, f64)> = stops.iter().map(|&s| (s, 1.0)).collect();
                coeffs.push((link, -1.0));
                b.row(F::ChargeLink, tag.clone(), coeffs, Sense::Le, 0.0);
            }
            for (idx, &c) in opts_ij.iter().enumerate() {
                let cap = bounds.leg(i, j, c).c_ub;
                b.row(
                    F::ChargeBound,
                    format!("{i},{j},{c},{k}"),
                    vec![(charges[idx], 1.0), (stops[idx], -cap)],
                    Sense::Le,
                    0.0,
                );
            }

            // Transit consumption: direct unless a station is selected.
            let d = bounds.pair(i, j).d_fp;
            let detour_m = rate_max
                * opts_ij
                    .iter()
                    .map(|&c| bounds.leg(i, j, c).delta_d_km.abs())
                    .fold(0.0, f64::max);
            if stops.is_empty() {
                b.row(
                    F::TransitEnergy,
                    tag.clone(),
                    vec![(transit, 1.0), (battery, -econ.delta_eb_per_km * d)],
                    Sense::Eq,
                    econ.delta_e0_kwh_per_km * d,
                );
            } else {
                let direct = |sign: f64| {
                    let mut coeffs = vec![(transit, 1.0), (battery, -econ.delta_eb_per_km * d)];
                    coeffs.extend(stops.iter().map(|&s| (s, sign * detour_m)));
                    coeffs
                };
                b.row(F::TransitEnergy, tag.clone(), direct(1.0), Sense::Ge, econ.delta_e0_kwh_per_km * d);
                b.row(F::TransitEnergy, tag.clone(), direct(-1.0), Sense::Le, econ.delta_e0_kwh_per_km * d);
                for (idx, &c) in opts_ij.iter().enumerate() {
                    let via = d + bounds.leg(i, j, c).delta_d_km;
                    let base = vec![(transit, 1.0), (battery, -econ.delta_eb_per_km * via)];
                    let mut lo = base.clone();
                    lo.push((stops[idx], -detour_m));
                    b.row(
                        F::TransitEnergy,
                        format!("{i},{j},{c},{k}"),
                        lo,
                        Sense::Ge,
                        econ.delta_e0_kwh_per_km * via - detour_m,
                    );
                    let mut hi = base;
                    hi.push((stops[idx], detour_m));
                    b.row(
                        F::TransitEnergy,
                        format!("{i},{j},{c},{k}"),
                        hi,
                        Sense::Le,
                        econ.delta_e0_kwh_per_km * via + detour_m,
                    );
                }
            }

            // Level after j = level after i - transit - service of j + charged.
            let service = ext.service_distance(j);
            let extra = opts_ij
                .iter()
                .map(|&c| bounds.leg(i, j, c).delta_d_km)
                .fold(0.0, f64::max);
            let m = e_max + max_cap + rate_max * (d + extra + service);
            big_m_energy = big_m_energy.max(m);
            let mut coeffs = vec![
                (level(&b, j), 1.0),
                (level(&b, i), -1.0),
                (transit, 1.0),
                (battery, econ.delta_eb_per_km * service),
            ];
            coeffs.extend(charges.iter().map(|&c| (c, -1.0)));
            let base_rhs = -econ.delta_e0_kwh_per_km * service;
            if i == j {
                unreachable!("diagonal pairs are never feasible");
            }
            let mut lo = coeffs.clone();
            lo.push((link, -m));
            b.row(F::EnergyBalance, tag.clone(), lo, Sense::Ge, base_rhs - m);
            let mut hi = coeffs;
            hi.push((link, m));
            b.row(F::EnergyBalance, tag, hi, Sense::Le, base_rhs + m);
        }

        // Start and end levels agree, so a route recharges what it consumes;
        // consumption is at least the rate at the smallest used battery.
        let rate_lo = consumption_per_km(econ.e_b0_kwh.max(opts.fixed_battery_kwh.unwrap_or(0.0)), econ);
        let mut coeffs = Vec::new();
        for &(i, j) in &pairs {
            let km = bounds.pair(i, j).d_fp + ext.service_distance(j);
            coeffs.push((b.get(V::Link { i, j, k }), -rate_lo * km));
            for &c in &options[&(i, j)] {
                coeffs.push((b.get(V::Charge { i, j, c, k }), 1.0));
                let dd = bounds.leg(i, j, c).delta_d_km;
                let rate = if dd >= 0.0 { rate_lo } else { rate_max };
                coeffs.push((b.get(V::Stop { i, j, c, k }), -rate * dd));
            }
        }
        b.row(F::EnergyBalance, format!("total,{k}"), coeffs, Sense::Ge, 0.0);

        // Flow continuity: in - out = last - first.
        for j in 0..size {
            let mut coeffs = Vec::new();
            for &(h, t) in &pairs {
                if t == j {
                    coeffs.push((b.get(V::Link { i: h, j: t, k }), 1.0));
                }
                if h == j {
                    coeffs.push((b.get(V::Link { i: h, j: t, k }), -1.0));
                }
            }
            let rhs = if j == 0 {
                -1.0
            } else if j == end {
                1.0
            } else {
                0.0
            };
            b.row(F::Continuity, format!("{j},{k}"), coeffs, Sense::Eq, rhs);
        }

        for j in 0..size {
            b.row(
                F::BatteryBound,
                format!("{j},{k}"),
                vec![(level(&b, j), 1.0), (battery, -1.0)],
                Sense::Le,
                0.0,
            );
        }
        // The level before pickup must also fit in the battery.
        for j in 1..=n {
            let service = ext.service_distance(j);
            let mut coeffs = vec![(level(&b, j), 1.0), (battery, -(1.0 - econ.delta_eb_per_km * service))];
            for &(h, t) in &pairs {
                if t == j {
                    coeffs.push((b.get(V::Link { i: h, j, k }), econ.delta_e0_kwh_per_km * service));
                }
            }
            b.row(F::BatteryBound, format!("pickup,{j},{k}"), coeffs, Sense::Le, 0.0);
        }

        for j in [0, end] {
            b.row(
                F::Initialization,
                format!("{j},{k}"),
                vec![(level(&b, j), 1.0), (used, -econ.e_b0_kwh)],
                Sense::Eq,
                0.0,
            );
        }
        b.row(
            F::Initialization,
            format!("battery,{k}"),
            vec![(battery, 1.0), (used, -econ.e_b0_kwh)],
            Sense::Ge,
            0.0,
        );

        let mut coeffs: Vec<(usize, f64)> = pairs
            .iter()
            .filter(|&&p| p != (0, end))
            .map(|&(i, j)| (b.get(V::Link { i, j, k }), 1.0))
            .collect();
        coeffs.push((used, -((n + 1) as f64)));
        b.row(F::Usage, format!("links,{k}"), coeffs, Sense::Le, 0.0);
        // Per-request form of the same link; tightens the relaxation.
        for j in 1..=n {
            let mut coeffs: Vec<(usize, f64)> = pairs
                .iter()
                .filter(|&&(_, t)| t == j)
                .map(|&(h, t)| (b.get(V::Link { i: h, j: t, k }), 1.0))
                .collect();
            if !coeffs.is_empty() {
                coeffs.push((used, -1.0));
                b.row(F::Usage, format!("visit,{j},{k}"), coeffs, Sense::Le, 0.0);
            }
        }
        if let Some(idle) = b.index.get(&V::Link { i: 0, j: end, k }).copied() {
            b.row(F::Usage, format!("idle,{k}"), vec![(idle, 1.0), (used, 1.0)], Sense::Ge, 1.0);
        }
        b.row(
            F::Usage,
            format!("battery,{k}"),
            vec![(battery, 1.0), (used, -e_max)],
            Sense::Le,
            0.0,
        );

        if k + 1 < k_max {
            let next = b.get(V::Used { k: k + 1 });
            b.row(F::VehicleOrder, format!("{k}"), vec![(next, 1.0), (used, -1.0)], Sense::Le, 0.0);
            // Vehicles are interchangeable: order used ones by their first request.
            let mut coeffs = Vec::new();
            for &(h, t) in pairs.iter().filter(|&&(h, _)| h == 0) {
                coeffs.push((b.get(V::Link { i: h, j: t, k }), t as f64));
                coeffs.push((b.get(V::Link { i: h, j: t, k: k + 1 }), -(t as f64)));
            }
            coeffs.push((next, 1.0));
            b.row(F::VehicleOrder, format!("first,{k}"), coeffs, Sense::Le, 0.0);
        }
        if opts.homogeneous && k > 0 {
            let first = b.get(V::Battery { k: 0 });
            b.row(
                F::Homogeneous,
                format!("{k}"),
                vec![(battery, 1.0), (first, -1.0)],
                Sense::Le,
                0.0,
            );
            b.row(
                F::Homogeneous,
                format!("{k}"),
                vec![(battery, 1.0), (first, -1.0), (used, -e_max)],
                Sense::Ge,
                -e_max,
            );
        }
        if let Some(fixed) = opts.fixed_battery_kwh {
            b.row(
                F::BatteryFixed,
                format!("{k}"),
                vec![(battery, 1.0), (used, -fixed)],
                Sense::Eq,
                0.0,
            );
        }
    }

    // Each request is entered and left at most once over the whole fleet.
    for j in 1..=n {
        let mut into = Vec::new();
        let mut out = Vec::new();
        for k in 0..k_max {
            for &(h, t) in &pairs {
                if t == j {
                    into.push((b.get(V::Link { i: h, j: t, k }), 1.0));
                }
                if h == j {
                    out.push((b.get(V::Link { i: h, j: t, k }), 1.0));
                }
            }
        }
        let mut link = into.clone();
        link.push((b.get(V::Served { i: j }), -1.0));
        b.row(F::MaxOnce, format!("in,{j}"), into, Sense::Le, 1.0);
        b.row(F::MaxOnce, format!("out,{j}"), out, Sense::Le, 1.0);
        b.row(F::ServedLink, format!("{j}"), link, Sense::Eq, 0.0);
    }
    if let Some(q) = opts.served_quota {
        let coeffs = (1..=n).map(|i| (b.get(V::Served { i }), 1.0)).collect();
        b.row(F::Quota, String::new(), coeffs, Sense::Ge, q as f64);
    }
    if k_max > 1 {
        let mut coeffs = vec![(b.get(V::Fleet), 1.0)];
        coeffs.extend((0..k_max).map(|k| (b.get(V::Used { k }), -1.0)));
        b.row(F::Aggregation, "fleet".into(), coeffs, Sense::Eq, 0.0);
        for &(i, j) in &pairs {
            let mut coeffs = vec![(b.get(V::Flow { i, j }), 1.0)];
            coeffs.extend((0..k_max).map(|k| (b.get(V::Link { i, j, k }), -1.0)));
            b.row(F::Aggregation, format!("{i},{j}"), coeffs, Sense::Eq, 0.0);
        }
    }

    Ok(MilpModel {
        problem: b.problem,
        keys: b.keys,
        row_families: b.families,
        big_m_energy,
        k_max,
        options: *opts,
        econ: *econ,
        index: b.index,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolutionStatus {
    Optimal,
    Feasible,
    Infeasible,
    TimeLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChargeEvent {
    pub after_request: usize,
    pub before_request: usize,
    pub station: usize,
    pub energy_kwh: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehiclePlan {
    pub used: bool,
    pub battery_kwh: f64,
    /// Extended indices from the start depot to the end depot.
    pub schedule: Vec<usize>,
    pub charge_events: Vec<ChargeEvent>,
    /// Level after serving each scheduled index.
    pub energy_at: BTreeMap<usize, f64>,
}

impl VehiclePlan {
    pub fn idle(n_requests: usize) -> Self {
        Self {
            used: false,
            battery_kwh: 0.0,
            schedule: vec![0, n_requests + 1],
            charge_events: Vec::new(),
            energy_at: BTreeMap::new(),
        }
    }

    /// Requests in service order.
    pub fn requests(&self) -> impl Iterator<Item = usize> + '_ {
        let last = self.schedule.len().saturating_sub(1);
        self.schedule
            .iter()
            .enumerate()
            .filter(move |&(p, _)| p != 0 && p != last)
            .map(|(_, &i)| i)
    }

    pub fn total_charged_kwh(&self) -> f64 {
        self.charge_events.iter().map(|e| e.energy_kwh).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetSolution {
    pub vehicles: Vec<VehiclePlan>,
    /// Indexed by request position minus one.
    pub served: Vec<bool>,
    pub objective_eur: f64,
    pub gap: f64,
    pub status: SolutionStatus,
}

impl FleetSolution {
    /// Every vehicle idle, nothing served.
    pub fn idle(n_requests: usize, k_max: usize) -> Self {
        Self {
            vehicles: (0..k_max).map(|_| VehiclePlan::idle(n_requests)).collect(),
            served: vec![false; n_requests],
            objective_eur: 0.0,
            gap: 0.0,
            status: SolutionStatus::Optimal,
        }
    }

    pub fn used_vehicles(&self) -> usize {
        self.vehicles.iter().filter(|v| v.used).count()
    }

    pub fn served_count(&self) -> usize {
        self.served.iter().filter(|&&s| s).count()
    }

    pub fn total_charged_kwh(&self) -> f64 {
        self.vehicles.iter().map(|v| v.total_charged_kwh()).sum()
    }
}

fn clean(v: f64) -> f64 {
    if v.abs() < 1e-9 {
        0.0
    } else {
        v
    }
}

/// Reads a fleet plan out of a primal vector of `model`.
pub fn extract_solution(
    model: &MilpModel,
    dag: &TransitionDag,
    x: &[f64],
    status: SolutionStatus,
    objective: f64,
    gap: f64,
) -> FleetSolution {
    let ext = &dag.ext;
    let n = ext.num_requests();
    let end = ext.end_depot();
    let size = ext.len();
    let on = |key: VarKey| model.var(key).is_some_and(|j| x[j] > 0.5);
    let value = |key: VarKey| model.var(key).map_or(0.0, |j| clean(x[j]));
    let mut vehicles = Vec::with_capacity(model.k_max);
    for k in 0..model.k_max {
        let used = on(VarKey::Used { k });
        if !used {
            vehicles.push(VehiclePlan::idle(n));
            continue;
        }
        let battery = value(VarKey::Battery { k });
        let mut schedule = vec![0];
        let mut charge_events = Vec::new();
        let mut cur = 0;
        while cur != end && schedule.len() <= size {
            let Some(next) = (0..size).find(|&j| on(VarKey::Link { i: cur, j, k })) else {
                break;
            };
            for c in dag.bounds.charge_options(cur, next) {
                if on(VarKey::Stop { i: cur, j: next, c, k }) {
                    charge_events.push(ChargeEvent {
                        after_request: cur,
                        before_request: next,
                        station: c,
                        energy_kwh: value(VarKey::Charge { i: cur, j: next, c, k }).max(0.0),
                    });
                }
            }
            schedule.push(next);
            cur = next;
        }
        let energy_at = schedule
            .iter()
            .map(|&j| (j, value(VarKey::Level { j, k }).clamp(0.0, battery.max(0.0))))
            .collect();
        vehicles.push(VehiclePlan {
            used,
            battery_kwh: battery,
            schedule,
            charge_events,
            energy_at,
        });
    }
    let served = (1..=n).map(|i| on(VarKey::Served { i })).collect();
    FleetSolution {
        vehicles,
        served,
        objective_eur: objective,
        gap,
        status,
    }
}

/// Writes a fleet plan as a primal vector of `model`.
///
/// Columns not pinned by the plan get values that keep their rows
/// satisfied: inactive transit energies follow the direct distance and
/// levels of unvisited indices are 0.
pub fn encode_solution(model: &MilpModel, dag: &TransitionDag, sol: &FleetSolution) -> Vec<f64> {
    let econ = &model.econ;
    let bounds = &dag.bounds;
    let mut x = vec![0.0; model.keys.len()];
    let plans: Vec<Option<&VehiclePlan>> = (0..model.k_max)
        .map(|k| sol.vehicles.get(k).filter(|v| v.used))
        .collect();
    for (col, key) in model.keys.iter().enumerate() {
        x[col] = match *key {
            VarKey::Used { k } => plans[k].map_or(0.0, |_| 1.0),
            VarKey::Battery { k } => plans[k].map_or(0.0, |v| v.battery_kwh),
            VarKey::Level { j, k } => plans[k].and_then(|v| v.energy_at.get(&j).copied()).unwrap_or(0.0),
            VarKey::Link { i, j, k } => match plans[k] {
                Some(v) if v.schedule.windows(2).any(|w| w == [i, j]) => 1.0,
                None if i == 0 && j == dag.ext.end_depot() => 1.0,
                _ => 0.0,
            },
            VarKey::Stop { i, j, c, k } => plans[k]
                .and_then(|v| event_on(v, i, j))
                .map_or(0.0, |e| if e.station == c { 1.0 } else { 0.0 }),
            VarKey::Charge { i, j, c, k } => plans[k]
                .and_then(|v| event_on(v, i, j))
                .filter(|e| e.station == c)
                .map_or(0.0, |e| e.energy_kwh),
            VarKey::TransitEnergy { i, j, k } => {
                let battery = plans[k].map_or(0.0, |v| v.battery_kwh);
                let detour = plans[k]
                    .and_then(|v| event_on(v, i, j))
                    .map_or(0.0, |e| bounds.leg(i, j, e.station).delta_d_km);
                consumption_per_km(battery, econ) * (bounds.pair(i, j).d_fp + detour)
            }
            VarKey::Served { i } => {
                if sol.served.get(i - 1).copied().unwrap_or(false) {
                    1.0
                } else {
                    0.0
                }
            }
            VarKey::Flow { .. } | VarKey::Fleet => 0.0,
        };
    }
    // Totals over the per-vehicle columns filled above.
    for (col, key) in model.keys.iter().enumerate() {
        x[col] = match *key {
            VarKey::Fleet => (0..model.k_max).map(|k| x[model.index[&VarKey::Used { k }]]).sum(),
            VarKey::Flow { i, j } => (0..model.k_max)
                .map(|k| x[model.index[&VarKey::Link { i, j, k }]])
                .sum(),
            _ => continue,
        };
    }
    x
}

fn event_on(v: &VehiclePlan, i: usize, j: usize) -> Option<&ChargeEvent> {
    v.charge_events
        .iter()
        .find(|e| e.after_request == i && e.before_request == j)
}

/// Objective recomputed from the plan alone.
pub fn objective_value(sol: &FleetSolution, ext: &ExtendedRequestSet, econ: &EconomicParams) -> f64 {
    let fixed: f64 = sol
        .vehicles
        .iter()
        .filter(|v| v.used)
        .map(|v| (econ.p_v_eur + econ.p_b_eur_per_kwh * v.battery_kwh) / econ.tau_v_days)
        .sum();
    let energy = econ.p_el_eur_per_kwh * sol.total_charged_kwh();
    let revenue: f64 = sol
        .served
        .iter()
        .enumerate()
        .filter(|&(_, &s)| s)
        .map(|(p, _)| ext.price(p + 1))
        .sum();
    fixed + energy - revenue
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub family: ConstraintFamily,
    pub indices: Vec<usize>,
    /// Signed amount by which the constraint is missed.
    pub residual: f64,
}

/// Checks `sol` against every constraint family within `tol`.
///
/// Works from the DAG and the plan directly, independent of any model.
pub fn check_feasibility(
    dag: &TransitionDag,
    econ: &EconomicParams,
    opts: &FleetOptions,
    sol: &FleetSolution,
    tol: f64,
) -> Vec<Violation> {
    use ConstraintFamily as F;
    let ext = &dag.ext;
    let bounds = &dag.bounds;
    let n = ext.num_requests();
    let end = ext.end_depot();
    let size = ext.len();
    let mut out = Vec::new();
    let mut push = |family, indices: Vec<usize>, residual: f64| {
        out.push(Violation {
            family,
            indices,
            residual,
        })
    };

    if sol.vehicles.len() > opts.k_max {
        push(F::Usage, vec![sol.vehicles.len()], (sol.vehicles.len() - opts.k_max) as f64);
    }
    if sol.served.len() != n {
        push(F::ServedLink, vec![sol.served.len()], (sol.served.len() as f64 - n as f64).abs());
    }

    let mut visits = vec![0usize; n + 1];
    for (k, v) in sol.vehicles.iter().enumerate() {
        let valid_indices = v.schedule.iter().all(|&j| j < size);
        if !valid_indices {
            push(F::Continuity, vec![k], 1.0);
            continue;
        }
        if !v.used {
            let idle = v.schedule.is_empty() || v.schedule == [0, end];
            if !idle || !v.charge_events.is_empty() || v.battery_kwh.abs() > tol {
                push(F::Usage, vec![k], 1.0);
            }
            continue;
        }
        if v.schedule.first() != Some(&0) || v.schedule.last() != Some(&end) || v.schedule.len() < 2 {
            push(F::Continuity, vec![k], 1.0);
        }
        for i in v.schedule.iter().copied().filter(|&i| ext.is_request(i)) {
            visits[i] += 1;
        }

        let battery = v.battery_kwh;
        if battery > econ.e_b_max_kwh + tol || battery < -tol {
            push(F::BatteryBound, vec![k], econ.e_b_max_kwh.min(battery.max(0.0)) - battery);
        }
        let rate = consumption_per_km(battery, econ);

        // Charge events must sit on a scheduled transition, one per transition.
        let arcs: Vec<(usize, usize)> = v.schedule.windows(2).map(|w| (w[0], w[1])).collect();
        let mut per_arc: HashMap<(usize, usize), Vec<&ChargeEvent>> = HashMap::new();
        for e in &v.charge_events {
            let arc = (e.after_request, e.before_request);
            if !arcs.contains(&arc) {
                push(F::ChargeLink, vec![e.after_request, e.before_request, e.station, k], 1.0);
                continue;
            }
            if e.station >= bounds.n_stations() || !bounds.leg(arc.0, arc.1, e.station).s_ub {
                push(F::Transition, vec![e.after_request, e.before_request, e.station, k], 1.0);
                continue;
            }
            let cap = bounds.leg(arc.0, arc.1, e.station).c_ub;
            if e.energy_kwh < -tol {
                push(F::ChargeBound, vec![arc.0, arc.1, e.station, k], e.energy_kwh);
            } else if e.energy_kwh > cap + tol {
                push(F::ChargeBound, vec![arc.0, arc.1, e.station, k], cap - e.energy_kwh);
            }
            per_arc.entry(arc).or_default().push(e);
        }
        for (arc, events) in &per_arc {
            if events.len() > 1 {
                push(F::ChargeLink, vec![arc.0, arc.1, k], (events.len() - 1) as f64);
            }
        }

        let level = |j: usize| v.energy_at.get(&j).copied();
        for &(i, j) in &arcs {
            if !bounds.x_ub(i, j) {
                push(F::Transition, vec![i, j, k], 1.0);
                continue;
            }
            let (detour, charged) = match per_arc.get(&(i, j)).and_then(|e| e.first()) {
                Some(e) if e.station < bounds.n_stations() => (bounds.leg(i, j, e.station).delta_d_km, e.energy_kwh),
                _ => (0.0, 0.0),
            };
            let (Some(before), Some(after)) = (level(i), level(j)) else {
                push(F::EnergyBalance, vec![i, j, k], f64::INFINITY);
                continue;
            };
            let d = bounds.pair(i, j).d_fp + detour + ext.service_distance(j);
            let expected = before - rate * d + charged;
            let residual = after - expected;
            if residual.abs() > tol {
                push(F::EnergyBalance, vec![i, j, k], residual);
            }
        }
        for &j in &v.schedule {
            let Some(e) = level(j) else { continue };
            if e < -tol {
                push(F::BatteryBound, vec![j, k], e);
            } else if e > battery + tol {
                push(F::BatteryBound, vec![j, k], battery - e);
            } else if ext.is_request(j) {
                let at_pickup = e + rate * ext.service_distance(j);
                if at_pickup > battery + tol {
                    push(F::BatteryBound, vec![j, k], battery - at_pickup);
                }
            }
        }
        for j in [0, end] {
            if let Some(e) = level(j) {
                if (e - econ.e_b0_kwh).abs() > tol {
                    push(F::Initialization, vec![j, k], e - econ.e_b0_kwh);
                }
            }
        }
        if battery < econ.e_b0_kwh - tol {
            push(F::Initialization, vec![k], battery - econ.e_b0_kwh);
        }
        if let Some(fixed) = opts.fixed_battery_kwh {
            if (battery - fixed).abs() > tol {
                push(F::BatteryFixed, vec![k], battery - fixed);
            }
        }
    }

    for i in 1..=n {
        if visits[i] > 1 {
            push(F::MaxOnce, vec![i], (visits[i] - 1) as f64);
        }
        let flagged = sol.served.get(i - 1).copied().unwrap_or(false);
        if flagged != (visits[i] > 0) {
            push(F::ServedLink, vec![i], 1.0);
        }
    }
    for k in 1..sol.vehicles.len() {
        if sol.vehicles[k].used && !sol.vehicles[k - 1].used {
            push(F::VehicleOrder, vec![k - 1, k], 1.0);
        }
    }
    if opts.homogeneous {
        let used: Vec<(usize, f64)> = sol
            .vehicles
            .iter()
            .enumerate()
            .filter(|(_, v)| v.used)
            .map(|(k, v)| (k, v.battery_kwh))
            .collect();
        if let Some(&(_, first)) = used.first() {
            for &(k, e) in &used[1..] {
                if (e - first).abs() > tol {
                    push(F::Homogeneous, vec![k], e - first);
                }
            }
        }
    }
    if let Some(q) = opts.served_quota {
        let served = sol.served.iter().filter(|&&s| s).count();
        if served < q {
            push(F::Quota, vec![], served as f64 - q as f64);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::{price, Tariff, TravelRequest};
    use crate::road_network::{ChargingStation, Node, RoadNetwork};
    use crate::transition_graph::build_dag;
    use eamod_lp::solve_dense;

    #[test]
    fn consumption_examples() {
        let econ = EconomicParams::default();
        assert_eq!(consumption_per_km(0.0, &econ), 0.09);
        assert!((consumption_per_km(20.0, &econ) - 0.14).abs() < 1e-12);
        assert!((consumption_per_km(60.0, &econ) - 0.24).abs() < 1e-12);
    }

    #[test]
    fn default_write_off_horizon() {
        let econ = EconomicParams::default();
        assert!((econ.tau_v_days - 1666.6666666666667).abs() < 1e-9);
        assert!(((8000.0 + 700.0 * 20.0) / econ.tau_v_days - 13.2).abs() < 1e-12);
    }

    /// Two nodes 5 km apart, depot at node 0, one station at the depot.
    pub(crate) fn line_instance(fare: Option<f64>) -> TransitionDag {
        let net = RoadNetwork::new(
            vec![
                Node { id: 0, x_km: 0.0, y_km: 0.0 },
                Node { id: 1, x_km: 5.0, y_km: 0.0 },
            ],
            vec![
                crate::road_network::Arc { from: 0, to: 1, distance_km: 5.0, time_h: 0.25 },
                crate::road_network::Arc { from: 1, to: 0, distance_km: 5.0, time_h: 0.25 },
            ],
        )
        .unwrap();
        let r = TravelRequest {
            id: 7,
            origin: 0,
            destination: 1,
            start_time_h: 1.0,
            service_time_h: 0.25,
            service_distance_km: 5.0,
            end_time_h: 1.25,
            price_eur: fare.unwrap_or_else(|| price(5.0, 0.25, &Tariff::default())),
        };
        let st = vec![ChargingStation { id: 0, node: 0, power_kw: 6.0 }];
        build_dag(&[r], &net, &st, 0, 80.0, None).unwrap()
    }

    fn fixed20() -> FleetOptions {
        FleetOptions {
            k_max: 1,
            fixed_battery_kwh: Some(20.0),
            ..Default::default()
        }
    }

    #[test]
    fn model_shape_is_deterministic() {
        let dag = line_instance(None);
        let econ = EconomicParams::default();
        let a = assemble_model(&dag, &econ, &fixed20()).unwrap();
        let b = assemble_model(&dag, &econ, &fixed20()).unwrap();
        assert_eq!(a.stats(), b.stats());
        assert_eq!(a.problem.num_vars(), a.keys.len());
        assert_eq!(a.problem.num_rows(), a.row_families.len());
        let expected_m = econ.e_b_max_kwh + 80.0 + econ.max_consumption_per_km() * 5.0;
        assert!(a.big_m_energy >= expected_m - 1e-9);
    }

    #[test]
    fn single_request_optimum_by_relaxation_and_plan() {
        let dag = line_instance(None);
        let econ = EconomicParams::default();
        let model = assemble_model(&dag, &econ, &fixed20()).unwrap();
        // Hand plan: depot -> request -> depot, 10 km at 0.14 kWh/km recharged on the way back.
        let mut plan = VehiclePlan {
            used: true,
            battery_kwh: 20.0,
            schedule: vec![0, 1, 2],
            charge_events: vec![ChargeEvent {
                after_request: 1,
                before_request: 2,
                station: 0,
                energy_kwh: 1.4,
            }],
            energy_at: BTreeMap::from([(0, 10.0), (1, 10.0 - 0.7), (2, 10.0)]),
        };
        let sol = FleetSolution {
            vehicles: vec![plan.clone()],
            served: vec![true],
            objective_eur: 0.0,
            gap: 0.0,
            status: SolutionStatus::Feasible,
        };
        assert!(check_feasibility(&dag, &econ, &fixed20(), &sol, 1e-9).is_empty());
        let j = objective_value(&sol, &dag.ext, &econ);
        assert!((j - (13.2 - 15.3 + 0.3 * 1.4)).abs() < 1e-9);
        let relax = solve_dense(&model.problem);
        assert!(relax.objective <= j + 1e-9);

        plan.charge_events.clear();
        let bad = FleetSolution {
            vehicles: vec![plan],
            ..sol
        };
        let v = check_feasibility(&dag, &econ, &fixed20(), &bad, 1e-9);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].family, ConstraintFamily::EnergyBalance);
    }

    #[test]
    fn objective_examples() {
        let dag = line_instance(None);
        let econ = EconomicParams::default();
        assert_eq!(objective_value(&FleetSolution::idle(1, 1), &dag.ext, &econ), 0.0);
        let mut sol = FleetSolution::idle(1, 1);
        sol.vehicles[0] = VehiclePlan {
            used: true,
            battery_kwh: 20.0,
            schedule: vec![0, 2],
            charge_events: vec![ChargeEvent {
                after_request: 0,
                before_request: 2,
                station: 0,
                energy_kwh: 3.0,
            }],
            energy_at: BTreeMap::new(),
        };
        assert!((objective_value(&sol, &dag.ext, &econ) - 14.10).abs() < 1e-9);
    }

    #[test]
    fn constructed_violations_are_flagged() {
        let dag = line_instance(None);
        let econ = EconomicParams::default();
        let opts = FleetOptions {
            k_max: 2,
            homogeneous: false,
            ..Default::default()
        };
        let plan = VehiclePlan {
            used: true,
            battery_kwh: 20.0,
            schedule: vec![0, 1, 2],
            charge_events: vec![ChargeEvent {
                after_request: 1,
                before_request: 2,
                station: 0,
                energy_kwh: 1.4,
            }],
            energy_at: BTreeMap::from([(0, 10.0), (1, 9.3), (2, 10.0)]),
        };
        let twice = FleetSolution {
            vehicles: vec![plan.clone(), plan.clone()],
            served: vec![true],
            objective_eur: 0.0,
            gap: 0.0,
            status: SolutionStatus::Feasible,
        };
        let v = check_feasibility(&dag, &econ, &opts, &twice, 1e-6);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].family, ConstraintFamily::MaxOnce);
        assert_eq!(v[0].indices, vec![1]);

        let mut low = plan;
        low.battery_kwh = 0.5;
        low.energy_at = BTreeMap::from([(0, 10.0), (1, -0.5), (2, 10.0)]);
        let sol = FleetSolution {
            vehicles: vec![low],
            served: vec![true],
            ..twice
        };
        let v = check_feasibility(&dag, &econ, &opts, &sol, 1e-6);
        let bound = v.iter().find(|v| v.family == ConstraintFamily::BatteryBound && v.indices == vec![1, 0]);
        assert!(bound.unwrap().residual < 0.0);
    }

    #[test]
    fn empty_dag_gives_idle_model() {
        let net = RoadNetwork::new(vec![Node { id: 0, x_km: 0.0, y_km: 0.0 }], vec![]).unwrap();
        let dag = build_dag(&[], &net, &[], 0, 80.0, None).unwrap();
        let econ = EconomicParams::default();
        let model = assemble_model(&dag, &econ, &FleetOptions::default()).unwrap();
        let r = solve_dense(&model.problem);
        assert!(r.objective.abs() < 1e-9);
        let sol = extract_solution(&model, &dag, &r.x, SolutionStatus::Optimal, r.objective, 0.0);
        assert_eq!(sol.used_vehicles(), 0);
        assert!(check_feasibility(&dag, &econ, &FleetOptions::default(), &sol, 1e-9).is_empty());
    }

    #[test]
    fn encoded_plans_satisfy_the_model() {
        let dag = line_instance(None);
        let econ = EconomicParams::default();
        let model = assemble_model(&dag, &econ, &fixed20()).unwrap();
        let plan = VehiclePlan {
            used: true,
            battery_kwh: 20.0,
            schedule: vec![0, 1, 2],
            charge_events: vec![ChargeEvent {
                after_request: 1,
                before_request: 2,
                station: 0,
                energy_kwh: 1.4,
            }],
            energy_at: BTreeMap::from([(0, 10.0), (1, 9.3), (2, 10.0)]),
        };
        let sol = FleetSolution {
            vehicles: vec![plan],
            served: vec![true],
            objective_eur: 0.0,
            gap: 0.0,
            status: SolutionStatus::Feasible,
        };
        let x = encode_solution(&model, &dag, &sol);
        assert!(model.problem.max_violation(&x, 1e-9) < 1e-9);
        assert!((model.problem.objective(&x) - objective_value(&sol, &dag.ext, &econ)).abs() < 1e-9);
        let back = extract_solution(&model, &dag, &x, SolutionStatus::Feasible, 0.0, 0.0);
        assert_eq!(back.vehicles, sol.vehicles);

        let idle = encode_solution(&model, &dag, &FleetSolution::idle(1, 1));
        assert!(model.problem.max_violation(&idle, 1e-9) < 1e-9);
    }
}
