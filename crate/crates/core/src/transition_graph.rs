//! Request-transition DAG with upper bounds on every transition, charging
//! and charge-amount variable, plus the idle-time domain reduction.
//!
//! Index 0 is the start depot, `1..=I` are the requests in start-time
//! order and `I + 1` is the end depot.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::demand::{sort_requests, TravelRequest};
use crate::error::{EamodError, Result};
use crate::io::{write_csv, CsvRecord};
use crate::road_network::{validate_station, ChargingStation, MetricTable, NodeId, RoadNetwork};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExtendedRequestSet {
    pub requests: Vec<TravelRequest>,
    pub depot_node: NodeId,
}

impl ExtendedRequestSet {
    pub fn num_requests(&self) -> usize {
        self.requests.len()
    }

    /// Number of indices including both depots.
    pub fn len(&self) -> usize {
        self.requests.len() + 2
    }

    pub fn is_empty(&self) -> bool {
        self.requests.is_empty()
    }

    pub fn end_depot(&self) -> usize {
        self.requests.len() + 1
    }

    pub fn is_request(&self, idx: usize) -> bool {
        idx >= 1 && idx <= self.requests.len()
    }

    pub fn request(&self, idx: usize) -> &TravelRequest {
        &self.requests[idx - 1]
    }

    pub fn origin(&self, idx: usize) -> NodeId {
        if self.is_request(idx) {
            self.request(idx).origin
        } else {
            self.depot_node
        }
    }

    pub fn destination(&self, idx: usize) -> NodeId {
        if self.is_request(idx) {
            self.request(idx).destination
        } else {
            self.depot_node
        }
    }

    /// Depots are unbounded in time: the start depot precedes and the end
    /// depot follows everything.
    pub fn start_time(&self, idx: usize) -> f64 {
        match idx {
            0 => f64::NEG_INFINITY,
            i if self.is_request(i) => self.request(i).start_time_h,
            _ => f64::INFINITY,
        }
    }

    pub fn end_time(&self, idx: usize) -> f64 {
        match idx {
            0 => f64::NEG_INFINITY,
            i if self.is_request(i) => self.request(i).end_time_h,
            _ => f64::INFINITY,
        }
    }

    pub fn service_distance(&self, idx: usize) -> f64 {
        if self.is_request(idx) {
            self.request(idx).service_distance_km
        } else {
            0.0
        }
    }

    pub fn price(&self, idx: usize) -> f64 {
        if self.is_request(idx) {
            self.request(idx).price_eur
        } else {
            0.0
        }
    }
}

/// Bounds of one ordered pair `(i, j)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairBounds {
    pub t_fp: f64,
    pub d_fp: f64,
    pub t_ava: f64,
    pub x_ub: bool,
}

/// Bounds of one charging option `(i, j, c)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationBounds {
    pub s_ub: bool,
    pub c_ub: f64,
    pub delta_t_h: f64,
    pub delta_d_km: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionBounds {
    size: usize,
    n_stations: usize,
    pairs: Vec<PairBounds>,
    legs: Vec<StationBounds>,
}

impl TransitionBounds {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn n_stations(&self) -> usize {
        self.n_stations
    }

    pub fn pair(&self, i: usize, j: usize) -> &PairBounds {
        &self.pairs[i * self.size + j]
    }

    pub fn leg(&self, i: usize, j: usize, c: usize) -> &StationBounds {
        &self.legs[(i * self.size + j) * self.n_stations + c]
    }

    fn pair_mut(&mut self, i: usize, j: usize) -> &mut PairBounds {
        &mut self.pairs[i * self.size + j]
    }

    fn leg_mut(&mut self, i: usize, j: usize, c: usize) -> &mut StationBounds {
        &mut self.legs[(i * self.size + j) * self.n_stations + c]
    }

    pub fn x_ub(&self, i: usize, j: usize) -> bool {
        self.pair(i, j).x_ub
    }

    /// Pairs with `x_ub = 1`, row-major.
    pub fn feasible_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.size)
            .flat_map(move |i| (0..self.size).map(move |j| (i, j)))
            .filter(move |&(i, j)| self.x_ub(i, j))
    }

    /// Stations with `s_ub = 1` on `(i, j)`.
    pub fn charge_options(&self, i: usize, j: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_stations).filter(move |&c| self.leg(i, j, c).s_ub)
    }

    pub fn x_count(&self) -> usize {
        self.pairs.iter().filter(|p| p.x_ub).count()
    }

    pub fn s_count(&self) -> usize {
        self.legs.iter().filter(|l| l.s_ub).count()
    }

    pub fn c_count(&self) -> usize {
        self.legs.iter().filter(|l| l.c_ub > 0.0).count()
    }
}

/// What an over-threshold deadhead or detour does to the idle time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverThreshold {
    /// The idle time becomes `+inf` and the transition is pruned.
    #[default]
    Prune,
    /// The idle time becomes `-inf` and the transition is kept.
    Keep,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeuristicThresholds {
    pub max_idle_h: f64,
    pub max_detour_h: f64,
    pub max_deadhead_h: f64,
    pub daily_energy_kwh: f64,
    pub over_threshold: OverThreshold,
}

impl Default for HeuristicThresholds {
    fn default() -> Self {
        Self {
            max_idle_h: 0.1,
            max_detour_h: 0.1,
            max_deadhead_h: 0.1,
            daily_energy_kwh: 30.0,
            over_threshold: OverThreshold::Prune,
        }
    }
}

impl HeuristicThresholds {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("max_idle_h", self.max_idle_h),
            ("max_detour_h", self.max_detour_h),
            ("max_deadhead_h", self.max_deadhead_h),
            ("daily_energy_kwh", self.daily_energy_kwh),
        ] {
            if !(v >= 0.0) {
                return Err(EamodError::InvalidParameter(format!("threshold {name} must be non-negative")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransitionDag {
    pub ext: ExtendedRequestSet,
    pub bounds: TransitionBounds,
    pub stations: Vec<ChargingStation>,
    pub e_b_max_kwh: f64,
}

impl TransitionDag {
    /// A request is servable when both depot legs reach it.
    pub fn is_servable(&self, i: usize) -> bool {
        let end = self.ext.end_depot();
        self.bounds.x_ub(0, i) && self.bounds.x_ub(i, end)
    }
}

/// Builds the DAG; fastest paths are computed over the nodes in use only.
pub fn build_dag(
    requests: &[TravelRequest],
    net: &RoadNetwork,
    stations: &[ChargingStation],
    depot_node: NodeId,
    e_b_max_kwh: f64,
    thresholds: Option<&HeuristicThresholds>,
) -> Result<TransitionDag> {
    for s in stations {
        validate_station(s, net)?;
    }
    if !net.contains(depot_node) {
        return Err(EamodError::UnknownNode(depot_node));
    }
    let table = MetricTable::build(net, &referenced_nodes(requests, stations, depot_node))?;
    build_dag_with_table(requests, &table, stations, depot_node, e_b_max_kwh, thresholds)
}

/// Request endpoints, station nodes and the depot.
pub fn referenced_nodes(requests: &[TravelRequest], stations: &[ChargingStation], depot_node: NodeId) -> Vec<NodeId> {
    let mut nodes: Vec<NodeId> = requests.iter().flat_map(|r| [r.origin, r.destination]).collect();
    nodes.extend(stations.iter().map(|s| s.node));
    nodes.push(depot_node);
    nodes.sort_unstable();
    nodes.dedup();
    nodes
}

/// As [`build_dag`], reusing a precomputed metric table that covers every
/// referenced node.
pub fn build_dag_with_table(
    requests: &[TravelRequest],
    table: &MetricTable,
    stations: &[ChargingStation],
    depot_node: NodeId,
    e_b_max_kwh: f64,
    thresholds: Option<&HeuristicThresholds>,
) -> Result<TransitionDag> {
    if !(e_b_max_kwh > 0.0 && e_b_max_kwh.is_finite()) {
        return Err(EamodError::InvalidParameter("e_b_max_kwh must be positive".into()));
    }
    let mut sorted = requests.to_vec();
    sort_requests(&mut sorted);
    let ext = ExtendedRequestSet {
        requests: sorted,
        depot_node,
    };
    let size = ext.len();
    let end = ext.end_depot();
    let ns = stations.len();
    let mut pairs = Vec::with_capacity(size * size);
    let mut legs = Vec::with_capacity(size * size * ns);
    for i in 0..size {
        for j in 0..size {
            let from = ext.destination(i);
            let to = ext.origin(j);
            let m = table.get(from, to);
            let (t_ava, x_ub) = if i == j || i == end || j == 0 {
                (f64::NEG_INFINITY, false)
            } else {
                let t_ava = ext.start_time(j) - ext.end_time(i);
                let t_ava = if t_ava.is_nan() { f64::INFINITY } else { t_ava };
                (t_ava, m.time_h <= t_ava)
            };
            pairs.push(PairBounds {
                t_fp: m.time_h,
                d_fp: m.distance_km,
                t_ava,
                x_ub,
            });
            for st in stations {
                let d = table.detour(st.node, from, to);
                let slack = t_ava - m.time_h - d.delta_time_h;
                let cap = if slack.is_infinite() && slack > 0.0 {
                    e_b_max_kwh
                } else {
                    (slack * st.power_kw).min(e_b_max_kwh)
                };
                let s_ub = x_ub && slack >= 0.0 && cap > 0.0;
                legs.push(StationBounds {
                    s_ub,
                    c_ub: if s_ub { cap } else { 0.0 },
                    delta_t_h: d.delta_time_h,
                    delta_d_km: d.delta_distance_km,
                });
            }
        }
    }
    let dag = TransitionDag {
        ext,
        bounds: TransitionBounds {
            size,
            n_stations: ns,
            pairs,
            legs,
        },
        stations: stations.to_vec(),
        e_b_max_kwh,
    };
    Ok(match thresholds {
        Some(th) => apply_heuristic(&dag, th),
        None => dag,
    })
}

/// Idle time of `(i, j)` through station `c`, or without charging when `c`
/// is `None`.
///
/// An over-threshold deadhead or detour replaces the idle time by an
/// infinity whose sign is chosen by `thresholds.over_threshold`.
pub fn idle_time(dag: &TransitionDag, i: usize, j: usize, c: Option<usize>, thresholds: &HeuristicThresholds) -> f64 {
    let pair = dag.bounds.pair(i, j);
    let gap = dag.ext.start_time(j) - dag.ext.end_time(i);
    let (detour, charge_h) = match c {
        Some(c) => (
            dag.bounds.leg(i, j, c).delta_t_h,
            thresholds.daily_energy_kwh / dag.stations[c].power_kw,
        ),
        None => (
            0.0,
            dag.stations
                .iter()
                .map(|s| thresholds.daily_energy_kwh / s.power_kw)
                .fold(0.0, f64::max),
        ),
    };
    if pair.t_fp > thresholds.max_deadhead_h || detour > thresholds.max_detour_h {
        return match thresholds.over_threshold {
            OverThreshold::Prune => f64::INFINITY,
            OverThreshold::Keep => f64::NEG_INFINITY,
        };
    }
    gap - detour - pair.t_fp - charge_h
}

/// Zeroes the bounds of request-to-request transitions whose idle time
/// exceeds the threshold. Depot transitions are never pruned.
pub fn apply_heuristic(dag: &TransitionDag, thresholds: &HeuristicThresholds) -> TransitionDag {
    let mut out = dag.clone();
    let n = dag.ext.num_requests();
    for i in 1..=n {
        for j in 1..=n {
            if !dag.bounds.x_ub(i, j) {
                continue;
            }
            let mut kept = false;
            for c in 0..dag.stations.len() {
                if !dag.bounds.leg(i, j, c).s_ub {
                    continue;
                }
                if idle_time(dag, i, j, Some(c), thresholds) > thresholds.max_idle_h {
                    let leg = out.bounds.leg_mut(i, j, c);
                    leg.s_ub = false;
                    leg.c_ub = 0.0;
                } else {
                    kept = true;
                }
            }
            if !kept && idle_time(dag, i, j, None, thresholds) > thresholds.max_idle_h {
                out.bounds.pair_mut(i, j).x_ub = false;
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReductionStats {
    pub x_removed_frac: f64,
    pub s_removed_frac: f64,
    pub c_removed_frac: f64,
}

pub fn reduction_stats(baseline: &TransitionBounds, pruned: &TransitionBounds) -> Result<ReductionStats> {
    if baseline.size != pruned.size || baseline.n_stations != pruned.n_stations {
        return Err(EamodError::MismatchedShapes);
    }
    let frac = |removed: usize, total: usize| if total == 0 { 0.0 } else { removed as f64 / total as f64 };
    let x_total = baseline.x_count();
    let x_removed = baseline
        .pairs
        .iter()
        .zip(&pruned.pairs)
        .filter(|(b, p)| b.x_ub && !p.x_ub)
        .count();
    let s_total = baseline.s_count();
    let s_removed = baseline
        .legs
        .iter()
        .zip(&pruned.legs)
        .filter(|(b, p)| b.s_ub && !p.s_ub)
        .count();
    let c_total = baseline.c_count();
    let c_removed = baseline
        .legs
        .iter()
        .zip(&pruned.legs)
        .filter(|(b, p)| b.c_ub > 0.0 && p.c_ub <= 0.0)
        .count();
    Ok(ReductionStats {
        x_removed_frac: frac(x_removed, x_total),
        s_removed_frac: frac(s_removed, s_total),
        c_removed_frac: frac(c_removed, c_total),
    })
}

#[derive(Clone, Copy, Serialize)]
struct DagRow {
    i: usize,
    j: usize,
    c: Option<usize>,
    x_ub: u8,
    s_ub: u8,
    c_ub: f64,
    t_fp: f64,
    t_ava: f64,
    delta_t: f64,
    delta_d: f64,
}

impl CsvRecord for DagRow {
    const HEADER: &'static [&'static str] =
        &["i", "j", "c", "x_ub", "s_ub", "c_ub", "t_fp", "t_ava", "delta_t", "delta_d"];
}

/// Debug dump of every admissible ordered pair, one row per station.
pub fn write_dag_csv(path: &Path, dag: &TransitionDag) -> Result<()> {
    let b = &dag.bounds;
    let end = dag.ext.end_depot();
    let mut rows = Vec::new();
    for i in 0..b.size() {
        for j in 0..b.size() {
            if i == j || i == end || j == 0 {
                continue;
            }
            let p = b.pair(i, j);
            let base = DagRow {
                i,
                j,
                c: None,
                x_ub: p.x_ub as u8,
                s_ub: 0,
                c_ub: 0.0,
                t_fp: p.t_fp,
                t_ava: p.t_ava,
                delta_t: 0.0,
                delta_d: 0.0,
            };
            if b.n_stations() == 0 {
                rows.push(base);
            }
            for c in 0..b.n_stations() {
                let l = b.leg(i, j, c);
                rows.push(DagRow {
                    c: Some(c),
                    s_ub: l.s_ub as u8,
                    c_ub: l.c_ub,
                    delta_t: l.delta_t_h,
                    delta_d: l.delta_d_km,
                    ..base
                });
            }
        }
    }
    write_csv(path, &rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::{synth_requests, Tariff};
    use crate::road_network::generate_grid;

    fn request(id: u64, o: NodeId, d: NodeId, start: f64, dur: f64) -> TravelRequest {
        TravelRequest {
            id,
            origin: o,
            destination: d,
            start_time_h: start,
            service_time_h: dur,
            service_distance_km: dur * 20.0,
            end_time_h: start + dur,
            price_eur: 10.0,
        }
    }

    #[test]
    fn overlapping_requests_are_not_linked() {
        let (net, st) = generate_grid(3, 3, 1.0, 20.0, 1, 0).unwrap();
        let reqs = vec![request(1, 0, 8, 1.0, 0.2), request(2, 2, 6, 1.1, 0.2)];
        let dag = build_dag(&reqs, &net, &st, 4, 40.0, None).unwrap();
        assert!(!dag.bounds.x_ub(1, 2));
        assert!(!dag.bounds.x_ub(2, 1));
        assert!(dag.bounds.x_ub(0, 3));
        assert!(dag.is_servable(1) && dag.is_servable(2));
    }

    #[test]
    fn charge_cap_examples() {
        // Direct evaluation of the cap formula for both branches of the min.
        let cap = |t_ava: f64, t_fp: f64, dt: f64, p: f64, emax: f64| ((t_ava - t_fp - dt) * p).min(emax);
        assert!((cap(1.0, 0.4, 0.1, 6.0, 40.0) - 3.0).abs() < 1e-12);
        assert!((cap(1.0, 0.4, 0.1, 6.0, 2.0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn built_caps_match_formula() {
        let (net, st) = generate_grid(4, 4, 0.5, 20.0, 2, 3).unwrap();
        let reqs = synth_requests(12, 6.0, &net, 9, &Tariff::default()).unwrap();
        for emax in [40.0, 2.0] {
            let dag = build_dag(&reqs, &net, &st, 0, emax, None).unwrap();
            let b = &dag.bounds;
            for (i, j) in b.feasible_pairs() {
                let p = b.pair(i, j);
                for c in 0..st.len() {
                    let l = b.leg(i, j, c);
                    if l.s_ub {
                        let expect = if p.t_ava.is_infinite() {
                            emax
                        } else {
                            ((p.t_ava - p.t_fp - l.delta_t_h) * st[c].power_kw).min(emax)
                        };
                        assert!((l.c_ub - expect).abs() < 1e-12);
                    }
                }
            }
        }
    }

    fn hand_dag(gap: f64, t_fp: f64, detour: f64) -> TransitionDag {
        let ext = ExtendedRequestSet {
            requests: vec![request(1, 0, 1, 0.0, 0.5), request(2, 2, 3, 0.5 + gap, 0.5)],
            depot_node: 0,
        };
        let size = 4;
        let mut pairs = vec![
            PairBounds {
                t_fp: 0.0,
                d_fp: 0.0,
                t_ava: 0.0,
                x_ub: false
            };
            size * size
        ];
        pairs[size + 2] = PairBounds {
            t_fp,
            d_fp: t_fp * 20.0,
            t_ava: gap,
            x_ub: true,
        };
        let mut legs = vec![
            StationBounds {
                s_ub: false,
                c_ub: 0.0,
                delta_t_h: 0.0,
                delta_d_km: 0.0
            };
            size * size
        ];
        legs[size + 2] = StationBounds {
            s_ub: true,
            c_ub: 1.0,
            delta_t_h: detour,
            delta_d_km: detour * 20.0,
        };
        TransitionDag {
            ext,
            bounds: TransitionBounds {
                size,
                n_stations: 1,
                pairs,
                legs,
            },
            stations: vec![ChargingStation {
                id: 0,
                node: 5,
                power_kw: 6.0,
            }],
            e_b_max_kwh: 40.0,
        }
    }

    #[test]
    fn idle_time_examples() {
        let th = HeuristicThresholds {
            max_deadhead_h: 1.0,
            ..Default::default()
        };
        let dag = hand_dag(2.0, 0.4, 0.1);
        assert!((idle_time(&dag, 1, 2, Some(0), &th) - (-3.5)).abs() < 1e-12);

        let dag = hand_dag(6.0, 0.4, 0.1);
        let t = idle_time(&dag, 1, 2, Some(0), &th);
        assert!((t - 0.5).abs() < 1e-12);
        let pruned = apply_heuristic(&dag, &th);
        assert!(!pruned.bounds.leg(1, 2, 0).s_ub);
        assert!(!pruned.bounds.x_ub(1, 2));
    }

    #[test]
    fn over_threshold_detour_sign_follows_mode() {
        let dag = hand_dag(2.0, 0.05, 0.5);
        let keep = HeuristicThresholds {
            over_threshold: OverThreshold::Keep,
            ..Default::default()
        };
        assert_eq!(idle_time(&dag, 1, 2, Some(0), &keep), f64::NEG_INFINITY);
        assert!(apply_heuristic(&dag, &keep).bounds.leg(1, 2, 0).s_ub);
        let prune = HeuristicThresholds::default();
        assert_eq!(idle_time(&dag, 1, 2, Some(0), &prune), f64::INFINITY);
        assert!(!apply_heuristic(&dag, &prune).bounds.leg(1, 2, 0).s_ub);
    }

    #[test]
    fn reduction_counting() {
        let dag = hand_dag(6.0, 0.4, 0.1);
        let same = reduction_stats(&dag.bounds, &dag.bounds).unwrap();
        assert_eq!(same.x_removed_frac, 0.0);
        assert_eq!(same.s_removed_frac, 0.0);
        let pruned = apply_heuristic(&dag, &HeuristicThresholds { max_deadhead_h: 1.0, ..Default::default() });
        let r = reduction_stats(&dag.bounds, &pruned.bounds).unwrap();
        assert_eq!(r.x_removed_frac, 1.0);
        assert_eq!(r.c_removed_frac, 1.0);
        let other = hand_dag(1.0, 0.1, 0.1);
        let mut small = other.bounds.clone();
        small.size = 3;
        assert!(matches!(reduction_stats(&other.bounds, &small), Err(EamodError::MismatchedShapes)));
    }
}
