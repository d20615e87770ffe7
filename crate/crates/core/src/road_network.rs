//! Road digraph, fastest paths, charging-station detours and grid generation.
//!
//! Units are fixed throughout the crate: km, hours, kWh, kW and euros.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{EamodError, Result};
use crate::io::{read_csv, write_csv, CsvRecord};

pub type NodeId = u64;

/// Charger power used by generated grids, in kW.
pub const DEFAULT_CHARGER_KW: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub x_km: f64,
    pub y_km: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arc {
    pub from: NodeId,
    pub to: NodeId,
    pub distance_km: f64,
    pub time_h: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChargingStation {
    pub id: u64,
    pub node: NodeId,
    pub power_kw: f64,
}

impl CsvRecord for Node {
    const HEADER: &'static [&'static str] = &["id", "x_km", "y_km"];
}

impl CsvRecord for Arc {
    const HEADER: &'static [&'static str] = &["from", "to", "distance_km", "time_h"];
}

impl CsvRecord for ChargingStation {
    const HEADER: &'static [&'static str] = &["id", "node", "power_kw"];
}

/// Time and distance of the fastest path between two nodes.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PathMetrics {
    pub time_h: f64,
    pub distance_km: f64,
}

/// Extra time and distance of passing through a station.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Detour {
    pub delta_time_h: f64,
    pub delta_distance_km: f64,
}

/// Immutable directed road graph.
#[derive(Debug, Clone)]
pub struct RoadNetwork {
    nodes: Vec<Node>,
    arcs: Vec<Arc>,
    index: HashMap<NodeId, usize>,
    /// Outgoing arcs per node position, as `(head position, arc index)`.
    out: Vec<Vec<(usize, usize)>>,
}

#[derive(Clone, Copy, PartialEq)]
struct Label {
    time: f64,
    dist: f64,
    node: usize,
}

impl Eq for Label {}

impl Ord for Label {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then(other.dist.total_cmp(&self.dist))
            .then(other.node.cmp(&self.node))
    }
}

impl PartialOrd for Label {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl RoadNetwork {
    pub fn new(nodes: Vec<Node>, arcs: Vec<Arc>) -> Result<Self> {
        let mut index = HashMap::with_capacity(nodes.len());
        for (p, n) in nodes.iter().enumerate() {
            if index.insert(n.id, p).is_some() {
                return Err(EamodError::InvalidParameter(format!("duplicate node id {}", n.id)));
            }
        }
        let mut out = vec![Vec::new(); nodes.len()];
        for (a, arc) in arcs.iter().enumerate() {
            let from = *index.get(&arc.from).ok_or(EamodError::UnknownNode(arc.from))?;
            let to = *index.get(&arc.to).ok_or(EamodError::UnknownNode(arc.to))?;
            if !(arc.distance_km > 0.0 && arc.time_h > 0.0) || !arc.distance_km.is_finite() || !arc.time_h.is_finite() {
                return Err(EamodError::InvalidParameter(format!(
                    "arc {}->{} must have positive finite distance and time",
                    arc.from, arc.to
                )));
            }
            out[from].push((to, a));
        }
        Ok(Self { nodes, arcs, index, out })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn arcs(&self) -> &[Arc] {
        &self.arcs
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.index.contains_key(&id)
    }

    fn position(&self, id: NodeId) -> Result<usize> {
        self.index.get(&id).copied().ok_or(EamodError::UnknownNode(id))
    }

    /// Single-source fastest paths; unreachable nodes get `None`.
    ///
    /// Labels are ordered by time, then distance, then node id, so equal-time
    /// paths resolve to the shorter one deterministically.
    pub fn fastest_tree(&self, origin: NodeId) -> Result<Vec<Option<PathMetrics>>> {
        let src = self.position(origin)?;
        let n = self.nodes.len();
        let mut best: Vec<Option<(f64, f64)>> = vec![None; n];
        let mut done = vec![false; n];
        let mut heap = BinaryHeap::new();
        best[src] = Some((0.0, 0.0));
        heap.push(Label { time: 0.0, dist: 0.0, node: src });
        while let Some(Label { time, dist, node }) = heap.pop() {
            if done[node] {
                continue;
            }
            done[node] = true;
            for &(head, a) in &self.out[node] {
                if done[head] {
                    continue;
                }
                let arc = &self.arcs[a];
                let cand = (time + arc.time_h, dist + arc.distance_km);
                let better = match best[head] {
                    None => true,
                    Some(cur) => cand.0 < cur.0 || (cand.0 == cur.0 && cand.1 < cur.1),
                };
                if better {
                    best[head] = Some(cand);
                    heap.push(Label { time: cand.0, dist: cand.1, node: head });
                }
            }
        }
        Ok(best
            .into_iter()
            .map(|b| b.map(|(time_h, distance_km)| PathMetrics { time_h, distance_km }))
            .collect())
    }

    pub fn load_csv(nodes_path: &Path, arcs_path: &Path) -> Result<Self> {
        let nodes: Vec<Node> = read_csv(nodes_path)?;
        let arcs: Vec<Arc> = read_csv(arcs_path)?;
        Self::new(nodes, arcs)
    }

    pub fn write_csv(&self, nodes_path: &Path, arcs_path: &Path) -> Result<()> {
        write_csv(nodes_path, &self.nodes)?;
        write_csv(arcs_path, &self.arcs)
    }
}

pub fn load_stations(path: &Path, net: &RoadNetwork) -> Result<Vec<ChargingStation>> {
    let stations: Vec<ChargingStation> = read_csv(path)?;
    for s in &stations {
        validate_station(s, net)?;
    }
    Ok(stations)
}

pub fn write_stations(path: &Path, stations: &[ChargingStation]) -> Result<()> {
    write_csv(path, stations)
}

pub fn validate_station(s: &ChargingStation, net: &RoadNetwork) -> Result<()> {
    if !net.contains(s.node) {
        return Err(EamodError::UnknownNode(s.node));
    }
    if !(s.power_kw > 0.0 && s.power_kw.is_finite()) {
        return Err(EamodError::InvalidParameter(format!("station {} must have positive power", s.id)));
    }
    Ok(())
}

pub fn fastest_path(net: &RoadNetwork, origin: NodeId, destination: NodeId) -> Result<PathMetrics> {
    let dst = net.position(destination)?;
    net.fastest_tree(origin)?[dst].ok_or(EamodError::UnreachableNode {
        from: origin,
        to: destination,
    })
}

pub fn transition_detour(
    net: &RoadNetwork,
    station: &ChargingStation,
    from_node: NodeId,
    to_node: NodeId,
) -> Result<Detour> {
    let direct = fastest_path(net, from_node, to_node)?;
    let first = fastest_path(net, from_node, station.node)?;
    let second = fastest_path(net, station.node, to_node)?;
    Ok(detour_from_legs(direct, first, second))
}

fn detour_from_legs(direct: PathMetrics, first: PathMetrics, second: PathMetrics) -> Detour {
    // Rounding may leave tiny negatives on collinear legs.
    let clean = |v: f64| if v.abs() < 1e-12 { 0.0 } else { v };
    Detour {
        delta_time_h: clean(first.time_h + second.time_h - direct.time_h).max(0.0),
        delta_distance_km: clean(first.distance_km + second.distance_km - direct.distance_km),
    }
}

/// All-pairs fastest-path metrics restricted to a set of nodes of interest.
#[derive(Debug, Clone)]
pub struct MetricTable {
    nodes: Vec<NodeId>,
    pos: HashMap<NodeId, usize>,
    data: Vec<PathMetrics>,
}

impl MetricTable {
    /// Fails with `UnreachableNode` unless the nodes are mutually reachable.
    pub fn build(net: &RoadNetwork, nodes: &[NodeId]) -> Result<Self> {
        let mut uniq: Vec<NodeId> = nodes.to_vec();
        uniq.sort_unstable();
        uniq.dedup();
        let pos: HashMap<NodeId, usize> = uniq.iter().enumerate().map(|(i, &n)| (n, i)).collect();
        let k = uniq.len();
        let mut data = vec![PathMetrics::default(); k * k];
        for (a, &origin) in uniq.iter().enumerate() {
            let tree = net.fastest_tree(origin)?;
            for (b, &dest) in uniq.iter().enumerate() {
                let p = net.position(dest)?;
                data[a * k + b] = tree[p].ok_or(EamodError::UnreachableNode { from: origin, to: dest })?;
            }
        }
        Ok(Self { nodes: uniq, pos, data })
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    /// Panics if either node was not part of the table.
    pub fn get(&self, from: NodeId, to: NodeId) -> PathMetrics {
        let k = self.nodes.len();
        self.data[self.pos[&from] * k + self.pos[&to]]
    }

    pub fn detour(&self, station_node: NodeId, from: NodeId, to: NodeId) -> Detour {
        detour_from_legs(self.get(from, to), self.get(from, station_node), self.get(station_node, to))
    }
}

/// Bidirectional `rows x cols` grid with stations spread over a regular lattice.
pub fn generate_grid(
    rows: usize,
    cols: usize,
    block_km: f64,
    speed_kmh: f64,
    n_stations: usize,
    seed: u64,
) -> Result<(RoadNetwork, Vec<ChargingStation>)> {
    if rows < 2 || cols < 2 {
        return Err(EamodError::InvalidDimension(format!("grid must be at least 2x2, got {rows}x{cols}")));
    }
    if !(block_km > 0.0 && speed_kmh > 0.0) {
        return Err(EamodError::InvalidDimension("block length and speed must be positive".into()));
    }
    if n_stations > rows * cols {
        return Err(EamodError::InvalidDimension(format!(
            "{n_stations} stations do not fit on {} nodes",
            rows * cols
        )));
    }
    let id = |r: usize, c: usize| (r * cols + c) as NodeId;
    let mut nodes = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            nodes.push(Node {
                id: id(r, c),
                x_km: c as f64 * block_km,
                y_km: r as f64 * block_km,
            });
        }
    }
    let time_h = block_km / speed_kmh;
    let mut arcs = Vec::with_capacity(2 * (2 * rows * cols - rows - cols));
    let mut link = |a: NodeId, b: NodeId| {
        arcs.push(Arc { from: a, to: b, distance_km: block_km, time_h });
        arcs.push(Arc { from: b, to: a, distance_km: block_km, time_h });
    };
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols {
                link(id(r, c), id(r, c + 1));
            }
            if r + 1 < rows {
                link(id(r, c), id(r + 1, c));
            }
        }
    }
    let net = RoadNetwork::new(nodes, arcs)?;

    let mut stations = Vec::with_capacity(n_stations);
    if n_stations > 0 {
        let ratio = rows as f64 / cols as f64;
        let mut g_r = ((n_stations as f64 * ratio).sqrt().round() as usize).clamp(1, rows);
        let mut g_c = n_stations.div_ceil(g_r);
        if g_c > cols {
            g_c = cols;
            g_r = n_stations.div_ceil(cols);
        }
        let lattice: Vec<(usize, usize)> = (0..g_r)
            .flat_map(|a| (0..g_c).map(move |b| (a, b)))
            .map(|(a, b)| {
                let r = ((a as f64 + 0.5) * rows as f64 / g_r as f64).floor() as usize;
                let c = ((b as f64 + 0.5) * cols as f64 / g_c as f64).floor() as usize;
                (r.min(rows - 1), c.min(cols - 1))
            })
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut chosen = sample(&mut rng, lattice.len(), n_stations).into_vec();
        chosen.sort_unstable();
        for (s, &p) in chosen.iter().enumerate() {
            let (r, c) = lattice[p];
            stations.push(ChargingStation {
                id: s as u64,
                node: id(r, c),
                power_kw: DEFAULT_CHARGER_KW,
            });
        }
    }
    Ok((net, stations))
}
