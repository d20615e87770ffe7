#![allow(dead_code)]

use eamod::demand::{synth_requests, Tariff, TravelRequest};
use eamod::milp::FleetOptions;
use eamod::road_network::{generate_grid, ChargingStation, RoadNetwork};
use eamod::transition_graph::{build_dag, HeuristicThresholds, TransitionDag};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const DEPOT: u64 = 4;

/// Oracle-sized instance on a 3x3 grid: up to 5 requests, 2 vehicles and
/// 2 stations.
pub struct Tiny {
    pub net: RoadNetwork,
    pub stations: Vec<ChargingStation>,
    pub requests: Vec<TravelRequest>,
    pub opts: FleetOptions,
}

impl Tiny {
    pub fn new(seed: u64, window_h: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(1..=5);
        let n_stations = rng.gen_range(1..=2);
        let (net, stations) = generate_grid(3, 3, 1.0, 20.0, n_stations, seed).unwrap();
        let requests = synth_requests(n, window_h, &net, seed, &Tariff::default()).unwrap();
        let opts = FleetOptions {
            k_max: rng.gen_range(1..=2),
            homogeneous: rng.gen_bool(0.5),
            ..Default::default()
        };
        Self {
            net,
            stations,
            requests,
            opts,
        }
    }

    pub fn dag(&self, heuristic: Option<&HeuristicThresholds>) -> TransitionDag {
        build_dag(&self.requests, &self.net, &self.stations, DEPOT, 80.0, heuristic).unwrap()
    }
}
