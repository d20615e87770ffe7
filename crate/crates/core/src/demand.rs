//! Travel requests, pricing, ingestion, synthesis and sub-problem sampling.

use std::collections::HashMap;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{EamodError, Result};
use crate::io::{read_csv, write_csv, CsvRecord};
use crate::road_network::{NodeId, PathMetrics, RoadNetwork};

/// Affine fare: base fare plus per-km and per-minute terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tariff {
    pub alpha_eur: f64,
    pub beta_eur_per_km: f64,
    pub gamma_eur_per_min: f64,
}

impl Default for Tariff {
    fn default() -> Self {
        Self {
            alpha_eur: 2.55,
            beta_eur_per_km: 1.5,
            gamma_eur_per_min: 0.35,
        }
    }
}

impl Tariff {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha_eur", self.alpha_eur),
            ("beta_eur_per_km", self.beta_eur_per_km),
            ("gamma_eur_per_min", self.gamma_eur_per_min),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(EamodError::InvalidParameter(format!("tariff {name} must be non-negative")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TravelRequest {
    pub id: u64,
    pub origin: NodeId,
    pub destination: NodeId,
    pub start_time_h: f64,
    pub service_time_h: f64,
    pub service_distance_km: f64,
    pub end_time_h: f64,
    pub price_eur: f64,
}

/// On-disk request row; derived fields are recomputed on load.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct RequestRow {
    id: u64,
    origin: NodeId,
    destination: NodeId,
    start_time_h: f64,
}

impl CsvRecord for RequestRow {
    const HEADER: &'static [&'static str] = &["id", "origin", "destination", "start_time_h"];
}

/// Fare in euros for a trip of `distance_km` lasting `time_h`.
pub fn price(service_distance_km: f64, service_time_h: f64, tariff: &Tariff) -> f64 {
    tariff.alpha_eur + tariff.beta_eur_per_km * service_distance_km + tariff.gamma_eur_per_min * service_time_h * 60.0
}

fn build_request(id: u64, origin: NodeId, destination: NodeId, start_time_h: f64, path: PathMetrics, tariff: &Tariff) -> TravelRequest {
    TravelRequest {
        id,
        origin,
        destination,
        start_time_h,
        service_time_h: path.time_h,
        service_distance_km: path.distance_km,
        end_time_h: start_time_h + path.time_h,
        price_eur: price(path.distance_km, path.time_h, tariff),
    }
}

/// Sorts by start time with id as tie-break.
pub fn sort_requests(requests: &mut [TravelRequest]) {
    requests.sort_by(|a, b| a.start_time_h.total_cmp(&b.start_time_h).then(a.id.cmp(&b.id)));
}

/// Fastest-path trees cached by origin.
struct TreeCache<'a> {
    net: &'a RoadNetwork,
    trees: HashMap<NodeId, Vec<Option<PathMetrics>>>,
    position: HashMap<NodeId, usize>,
}

impl<'a> TreeCache<'a> {
    fn new(net: &'a RoadNetwork) -> Self {
        let position = net.nodes().iter().enumerate().map(|(i, n)| (n.id, i)).collect();
        Self {
            net,
            trees: HashMap::new(),
            position,
        }
    }

    fn path(&mut self, from: NodeId, to: NodeId) -> Result<PathMetrics> {
        let pos = *self.position.get(&to).ok_or(EamodError::UnknownNode(to))?;
        if !self.trees.contains_key(&from) {
            let tree = self.net.fastest_tree(from)?;
            self.trees.insert(from, tree);
        }
        self.trees[&from][pos].ok_or(EamodError::UnreachableNode { from, to })
    }
}

pub fn load_requests(path: &Path, net: &RoadNetwork, tariff: &Tariff) -> Result<Vec<TravelRequest>> {
    let rows: Vec<RequestRow> = read_csv(path)?;
    let mut cache = TreeCache::new(net);
    let mut out = Vec::with_capacity(rows.len());
    for (r, row) in rows.into_iter().enumerate() {
        for n in [row.origin, row.destination] {
            if !net.contains(n) {
                return Err(EamodError::UnknownNode(n));
            }
        }
        if row.origin == row.destination {
            return Err(EamodError::SelfLoopRequest(row.id));
        }
        if !(row.start_time_h >= 0.0 && row.start_time_h.is_finite()) {
            return Err(EamodError::Parse {
                path: path.to_path_buf(),
                row: r + 2,
                msg: format!("start_time_h must be a non-negative number, got {}", row.start_time_h),
            });
        }
        let p = cache.path(row.origin, row.destination)?;
        out.push(build_request(row.id, row.origin, row.destination, row.start_time_h, p, tariff));
    }
    sort_requests(&mut out);
    Ok(out)
}

pub fn write_requests(path: &Path, requests: &[TravelRequest]) -> Result<()> {
    let rows: Vec<RequestRow> = requests
        .iter()
        .map(|r| RequestRow {
            id: r.id,
            origin: r.origin,
            destination: r.destination,
            start_time_h: r.start_time_h,
        })
        .collect();
    write_csv(path, &rows)
}

/// `n` requests with uniform start times on `[0, window_h]` and uniform
/// distinct origin/destination pairs.
pub fn synth_requests(n: usize, window_h: f64, net: &RoadNetwork, seed: u64, tariff: &Tariff) -> Result<Vec<TravelRequest>> {
    if !(window_h > 0.0 && window_h.is_finite()) {
        return Err(EamodError::InvalidParameter("window_h must be positive".into()));
    }
    let nodes = net.nodes();
    if n > 0 && nodes.len() < 2 {
        return Err(EamodError::InvalidParameter("network needs at least two nodes".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cache = TreeCache::new(net);
    let mut out = Vec::with_capacity(n);
    for id in 0..n {
        let o = rng.gen_range(0..nodes.len());
        let mut d = rng.gen_range(0..nodes.len() - 1);
        if d >= o {
            d += 1;
        }
        let start = rng.gen_range(0.0..=window_h);
        let (origin, destination) = (nodes[o].id, nodes[d].id);
        let p = cache.path(origin, destination)?;
        out.push(build_request(id as u64, origin, destination, start, p, tariff));
    }
    sort_requests(&mut out);
    Ok(out)
}

/// Uniform subset of size `n` drawn without replacement, sorted by start time.
pub fn sample_subproblem(requests: &[TravelRequest], n: usize, seed: u64) -> Result<Vec<TravelRequest>> {
    if n > requests.len() {
        return Err(EamodError::SampleTooLarge {
            requested: n,
            available: requests.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<TravelRequest> = sample(&mut rng, requests.len(), n)
        .into_iter()
        .map(|i| requests[i].clone())
        .collect();
    sort_requests(&mut out);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::road_network::generate_grid;

    #[test]
    fn price_examples() {
        let t = Tariff::default();
        assert_eq!(price(0.0, 0.0, &t), 2.55);
        assert!((price(5.0, 0.25, &t) - 15.30).abs() < 1e-12);
        let unit = Tariff {
            alpha_eur: 0.0,
            beta_eur_per_km: 1.0,
            gamma_eur_per_min: 1.0,
        };
        assert!((price(1.0, 1.0 / 60.0, &unit) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn synthetic_requests_are_consistent() {
        let (net, _) = generate_grid(4, 4, 0.5, 25.0, 0, 1).unwrap();
        let reqs = synth_requests(200, 3.0, &net, 5, &Tariff::default()).unwrap();
        assert_eq!(reqs.len(), 200);
        for r in &reqs {
            assert_ne!(r.origin, r.destination);
            assert!(r.start_time_h >= 0.0 && r.start_time_h <= 3.0);
            assert!((r.end_time_h - r.start_time_h - r.service_time_h).abs() < 1e-12);
            assert!(r.price_eur > 0.0);
        }
        assert!(reqs.windows(2).all(|w| w[0].start_time_h <= w[1].start_time_h));
        assert_eq!(reqs, synth_requests(200, 3.0, &net, 5, &Tariff::default()).unwrap());
        assert!(synth_requests(0, 3.0, &net, 5, &Tariff::default()).unwrap().is_empty());
    }

    #[test]
    fn sampling_edges() {
        let (net, _) = generate_grid(3, 3, 0.5, 25.0, 0, 1).unwrap();
        let reqs = synth_requests(10, 3.0, &net, 2, &Tariff::default()).unwrap();
        assert_eq!(sample_subproblem(&reqs, 10, 4).unwrap(), reqs);
        assert!(sample_subproblem(&reqs, 0, 4).unwrap().is_empty());
        assert!(matches!(
            sample_subproblem(&reqs, 11, 4),
            Err(EamodError::SampleTooLarge { requested: 11, available: 10 })
        ));
    }
}
