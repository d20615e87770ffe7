//! Exact solution of fleet models: LP relaxation, branch-and-bound, an
//! exhaustive oracle for tiny instances and MPS export.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use eamod_lp::{
    branch_and_bound, solve_dense, solve_relaxation, BranchOptions, LinearProblem, LpStatus, MilpStatus, NameMap,
    Sense, SimplexOptions,
};
use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::error::{EamodError, Result};
use crate::milp::{
    check_feasibility, consumption_per_km, encode_solution, extract_solution, ChargeEvent, EconomicParams,
    FleetOptions, FleetSolution, MilpModel, SolutionStatus, VehiclePlan,
};
use crate::transition_graph::TransitionDag;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveOptions {
    pub time_limit_s: f64,
    pub abs_gap: f64,
    pub rel_gap: f64,
    /// Recorded with results; the search itself is deterministic.
    pub seed: u64,
    pub node_limit: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            time_limit_s: 300.0,
            abs_gap: 1e-6,
            rel_gap: 0.0,
            seed: 0,
            node_limit: 1_000_000,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.time_limit_s > 0.0) || self.node_limit == 0 {
            return Err(EamodError::InvalidParameter("solver limits must be positive".into()));
        }
        if !(self.abs_gap >= 0.0 && self.rel_gap >= 0.0) {
            return Err(EamodError::InvalidParameter("solver gaps must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub status: SolutionStatus,
    pub objective: f64,
    pub bound: f64,
    pub gap: f64,
    pub nodes_explored: usize,
    pub lp_iterations: usize,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub values: Vec<f64>,
    pub objective: f64,
    pub status: LpStatus,
}

/// Solves the relaxation of `model` with integrality dropped.
pub fn solve_lp(model: &MilpModel) -> Result<LpSolution> {
    let r = solve_relaxation(&model.problem, SimplexOptions::default())?;
    Ok(LpSolution {
        values: r.x,
        objective: r.objective,
        status: r.status,
    })
}

/// Solves `model` to global optimality within the configured gaps.
///
/// Link and stop binaries branch up first. Without a service quota the idle
/// fleet seeds the incumbent.
pub fn solve(model: &MilpModel, dag: &TransitionDag, options: &SolveOptions) -> Result<(FleetSolution, SolveReport)> {
    options.validate()?;
    let start = Instant::now();
    let n = dag.ext.num_requests();
    let bopts = BranchOptions {
        time_limit: Some(Duration::from_secs_f64(options.time_limit_s)),
        node_limit: options.node_limit,
        abs_gap: options.abs_gap,
        rel_gap: options.rel_gap,
        int_tol: 1e-6,
        prefer_up: (0..model.keys.len()).map(|j| model.is_routing_binary(j)).collect(),
        priority: (0..model.keys.len()).map(|j| model.branch_priority(j)).collect(),
        simplex: SimplexOptions::default(),
    };
    let quota = model.options.served_quota.unwrap_or(0);
    let initial = (quota == 0).then(|| encode_solution(model, dag, &FleetSolution::idle(n, model.k_max)));
    let r = branch_and_bound(&model.problem, &bopts, initial.as_deref())?;
    let status = match (r.status, r.x.is_some()) {
        (MilpStatus::Optimal, true) => SolutionStatus::Optimal,
        (MilpStatus::Infeasible, _) | (MilpStatus::Optimal, false) => {
            return Err(if quota > 0 {
                EamodError::InfeasibleQuota { quota }
            } else {
                EamodError::Infeasible
            });
        }
        (MilpStatus::Unbounded, _) => {
            return Err(EamodError::InvalidParameter("model is unbounded".into()));
        }
        (MilpStatus::TimeLimit, true) => SolutionStatus::TimeLimit,
        (MilpStatus::NodeLimit, true) => SolutionStatus::Feasible,
        (MilpStatus::TimeLimit | MilpStatus::NodeLimit, false) => return Err(EamodError::TimeLimit),
    };
    let x = r.x.as_ref().expect("incumbent present");
    let gap = r.gap();
    let sol = extract_solution(model, dag, x, status, r.objective, gap);
    let violations = check_feasibility(dag, &model.econ, &model.options, &sol, 1e-6);
    if !violations.is_empty() {
        warn!("incumbent violates {} constraint(s), first: {:?}", violations.len(), violations[0]);
    }
    let report = SolveReport {
        status,
        objective: r.objective,
        bound: r.bound,
        gap,
        nodes_explored: r.nodes,
        lp_iterations: r.lp_iterations,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    debug!("solved: {report:?}");
    Ok((sol, report))
}

/// Writes `model` as fixed-format MPS plus a name-map sidecar.
pub fn export_mps(model: &MilpModel, path: &Path) -> Result<NameMap> {
    Ok(eamod_lp::export_mps(&model.problem, "EAMOD", path)?)
}

pub const BRUTE_FORCE_MAX_REQUESTS: usize = 6;
pub const BRUTE_FORCE_MAX_VEHICLES: usize = 2;

/// Exhaustive optimum over every assignment of requests to vehicles and
/// every station choice per transition.
///
/// Each candidate's continuous part is solved as a small dense LP. Shares
/// no code with the model assembly.
pub fn brute_force(dag: &TransitionDag, econ: &EconomicParams, opts: &FleetOptions) -> Result<FleetSolution> {
    econ.validate()?;
    opts.validate(econ)?;
    let n = dag.ext.num_requests();
    if n > BRUTE_FORCE_MAX_REQUESTS || opts.k_max > BRUTE_FORCE_MAX_VEHICLES {
        return Err(EamodError::InstanceTooLarge(format!(
            "{n} requests and {} vehicles exceed the oracle limits of {BRUTE_FORCE_MAX_REQUESTS} and {BRUTE_FORCE_MAX_VEHICLES}",
            opts.k_max
        )));
    }
    let mut search = Search {
        dag,
        econ,
        opts,
        best: None,
        best_value: f64::INFINITY,
    };
    let mut labels = vec![0usize; n];
    search.assignments(&mut labels, 0, 0);
    match search.best {
        Some(sol) => Ok(sol),
        None => match opts.served_quota {
            Some(q) if q > 0 => Err(EamodError::InfeasibleQuota { quota: q }),
            _ => Err(EamodError::Infeasible),
        },
    }
}

struct Search<'a> {
    dag: &'a TransitionDag,
    econ: &'a EconomicParams,
    opts: &'a FleetOptions,
    best: Option<FleetSolution>,
    best_value: f64,
}

/// Station choice per transition of each route; `None` drives direct.
type Choice = Vec<Vec<Option<usize>>>;

impl Search<'_> {
    /// Labels vehicles in order of first use, which also fixes the
    /// vehicle-order symmetry.
    fn assignments(&mut self, labels: &mut [usize], pos: usize, used: usize) {
        if pos == labels.len() {
            self.evaluate_assignment(labels, used);
            return;
        }
        for v in 0..=(used + 1).min(self.opts.k_max) {
            labels[pos] = v;
            self.assignments(labels, pos + 1, used.max(v));
        }
    }

    fn evaluate_assignment(&mut self, labels: &[usize], used: usize) {
        let ext = &self.dag.ext;
        let end = ext.end_depot();
        let served = labels.iter().filter(|&&l| l > 0).count();
        if served < self.opts.served_quota.unwrap_or(0) {
            return;
        }
        let mut routes: Vec<Vec<usize>> = vec![vec![0]; used];
        for (p, &l) in labels.iter().enumerate() {
            if l > 0 {
                routes[l - 1].push(p + 1);
            }
        }
        for r in &mut routes {
            r.push(end);
            if r.windows(2).any(|w| !self.dag.bounds.x_ub(w[0], w[1])) {
                return;
            }
        }
        let options: Vec<Vec<Vec<Option<usize>>>> = routes
            .iter()
            .map(|r| {
                r.windows(2)
                    .map(|w| {
                        let mut o: Vec<Option<usize>> = vec![None];
                        o.extend(self.dag.bounds.charge_options(w[0], w[1]).map(Some));
                        o.sort_by(|a, b| self.detour(w[0], w[1], *a).total_cmp(&self.detour(w[0], w[1], *b)));
                        o
                    })
                    .collect()
            })
            .collect();
        let mut choice: Choice = routes.iter().map(|r| vec![None; r.len() - 1]).collect();
        let revenue: f64 = labels
            .iter()
            .enumerate()
            .filter(|&(_, &l)| l > 0)
            .map(|(p, _)| ext.price(p + 1))
            .sum();
        self.choices(&routes, &options, &mut choice, 0, 0, revenue);
    }

    fn detour(&self, i: usize, j: usize, c: Option<usize>) -> f64 {
        c.map_or(0.0, |c| self.dag.bounds.leg(i, j, c).delta_d_km)
    }

    /// Lower bound: fixed cost at the smallest battery plus the energy to
    /// restore every kilometre driven.
    fn lower_bound(&self, routes: &[Vec<usize>], choice: &Choice, revenue: f64) -> f64 {
        let e_min = self.opts.fixed_battery_kwh.unwrap_or(0.0).max(self.econ.e_b0_kwh);
        let fixed = routes.len() as f64 * (self.econ.p_v_eur + self.econ.p_b_eur_per_kwh * e_min) / self.econ.tau_v_days;
        let km: f64 = routes
            .iter()
            .zip(choice)
            .map(|(r, ch)| {
                r.windows(2)
                    .zip(ch)
                    .map(|(w, &c)| self.arc_km(w[0], w[1], c))
                    .sum::<f64>()
            })
            .sum();
        fixed + self.econ.p_el_eur_per_kwh * consumption_per_km(e_min, self.econ) * km - revenue
    }

    fn arc_km(&self, i: usize, j: usize, c: Option<usize>) -> f64 {
        self.dag.bounds.pair(i, j).d_fp + self.detour(i, j, c) + self.dag.ext.service_distance(j)
    }

    fn choices(
        &mut self,
        routes: &[Vec<usize>],
        options: &[Vec<Vec<Option<usize>>>],
        choice: &mut Choice,
        v: usize,
        a: usize,
        revenue: f64,
    ) {
        if v == routes.len() {
            if self.lower_bound(routes, choice, revenue) >= self.best_value - 1e-9 {
                return;
            }
            if let Some(sol) = self.residual(routes, choice, revenue) {
                if sol.objective_eur < self.best_value - 1e-9 {
                    self.best_value = sol.objective_eur;
                    self.best = Some(sol);
                }
            }
            return;
        }
        if a == choice[v].len() {
            self.choices(routes, options, choice, v + 1, 0, revenue);
            return;
        }
        for &c in &options[v][a] {
            choice[v][a] = c;
            // Later arcs default to direct, the cheapest distance so far.
            let saved: Vec<Option<usize>> = choice[v][a + 1..].to_vec();
            if self.lower_bound(routes, &min_detour(choice, options, v, a), revenue) < self.best_value - 1e-9 {
                self.choices(routes, options, choice, v, a + 1, revenue);
            }
            choice[v][a + 1..].copy_from_slice(&saved);
        }
        choice[v][a] = None;
    }

    /// Continuous part for fixed routes and station choices.
    fn residual(&self, routes: &[Vec<usize>], choice: &Choice, revenue: f64) -> Option<FleetSolution> {
        let econ = self.econ;
        let ext = &self.dag.ext;
        let bounds = &self.dag.bounds;
        let n = ext.num_requests();
        let mut lp = LinearProblem::new();
        let batt_hi = self.opts.fixed_battery_kwh.unwrap_or(econ.e_b_max_kwh).min(econ.e_b_max_kwh);
        let batt_lo = self.opts.fixed_battery_kwh.unwrap_or(econ.e_b0_kwh).max(econ.e_b0_kwh);
        if batt_lo > batt_hi {
            return None;
        }
        let mut batteries = Vec::new();
        let mut levels: Vec<Vec<usize>> = Vec::new();
        let mut charges: Vec<Vec<Option<usize>>> = Vec::new();
        for (v, r) in routes.iter().enumerate() {
            let b = lp.add_var(format!("b{v}"), batt_lo, batt_hi, econ.p_b_eur_per_kwh / econ.tau_v_days, false);
            batteries.push(b);
            let last = r.len() - 1;
            let lv: Vec<usize> = (0..r.len())
                .map(|p| {
                    if p == 0 || p == last {
                        lp.add_var(format!("e{v}_{p}"), econ.e_b0_kwh, econ.e_b0_kwh, 0.0, false)
                    } else {
                        lp.add_var(format!("e{v}_{p}"), 0.0, econ.e_b_max_kwh, 0.0, false)
                    }
                })
                .collect();
            let ch: Vec<Option<usize>> = r
                .windows(2)
                .zip(&choice[v])
                .enumerate()
                .map(|(a, (w, c))| {
                    c.map(|c| {
                        let cap = bounds.leg(w[0], w[1], c).c_ub;
                        lp.add_var(format!("c{v}_{a}"), 0.0, cap, econ.p_el_eur_per_kwh, false)
                    })
                })
                .collect();
            for (a, w) in r.windows(2).enumerate() {
                let km = self.arc_km(w[0], w[1], choice[v][a]);
                let mut coeffs = vec![(lv[a + 1], 1.0), (lv[a], -1.0), (b, econ.delta_eb_per_km * km)];
                if let Some(c) = ch[a] {
                    coeffs.push((c, -1.0));
                }
                lp.add_row(format!("bal{v}_{a}"), coeffs, Sense::Eq, -econ.delta_e0_kwh_per_km * km);
            }
            for (p, &node) in r.iter().enumerate() {
                lp.add_row(format!("cap{v}_{p}"), vec![(lv[p], 1.0), (b, -1.0)], Sense::Le, 0.0);
                let s = ext.service_distance(node);
                if s > 0.0 {
                    lp.add_row(
                        format!("pick{v}_{p}"),
                        vec![(lv[p], 1.0), (b, econ.delta_eb_per_km * s - 1.0)],
                        Sense::Le,
                        -econ.delta_e0_kwh_per_km * s,
                    );
                }
            }
            levels.push(lv);
            charges.push(ch);
        }
        if self.opts.homogeneous {
            for &b in batteries.iter().skip(1) {
                lp.add_row("same", vec![(b, 1.0), (batteries[0], -1.0)], Sense::Eq, 0.0);
            }
        }
        let res = solve_dense(&lp);
        if res.status != LpStatus::Optimal {
            return None;
        }
        let fixed = routes.len() as f64 * econ.p_v_eur / econ.tau_v_days;
        let objective = res.objective + fixed - revenue;
        let mut vehicles: Vec<VehiclePlan> = routes
            .iter()
            .enumerate()
            .map(|(v, r)| {
                let battery = res.x[batteries[v]];
                let energy_at: BTreeMap<usize, f64> = r
                    .iter()
                    .enumerate()
                    .map(|(p, &node)| (node, res.x[levels[v][p]].clamp(0.0, battery)))
                    .collect();
                let charge_events = r
                    .windows(2)
                    .enumerate()
                    .filter_map(|(a, w)| {
                        let c = choice[v][a]?;
                        Some(ChargeEvent {
                            after_request: w[0],
                            before_request: w[1],
                            station: c,
                            energy_kwh: res.x[charges[v][a]?].max(0.0),
                        })
                    })
                    .collect();
                VehiclePlan {
                    used: true,
                    battery_kwh: battery,
                    schedule: r.clone(),
                    charge_events,
                    energy_at,
                }
            })
            .collect();
        vehicles.resize_with(self.opts.k_max, || VehiclePlan::idle(n));
        let mut served = vec![false; n];
        for r in routes {
            for &i in &r[1..r.len() - 1] {
                served[i - 1] = true;
            }
        }
        Some(FleetSolution {
            vehicles,
            served,
            objective_eur: objective,
            gap: 0.0,
            status: SolutionStatus::Optimal,
        })
    }
}

/// `choice` with every arc after `(v, a)` set to its least-detour option.
fn min_detour(choice: &Choice, options: &[Vec<Vec<Option<usize>>>], v: usize, a: usize) -> Choice {
    let mut out = choice.clone();
    for (vv, route) in options.iter().enumerate().skip(v) {
        for (aa, opts) in route.iter().enumerate() {
            if vv > v || aa > a {
                out[vv][aa] = opts[0];
            }
        }
    }
    out
}
