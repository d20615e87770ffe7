//! Joint fleet sizing, battery sizing and charge scheduling for an
//! electric mobility-on-demand operator.

pub mod analysis;
pub mod demand;
pub mod economics;
pub mod error;
pub mod io;
pub mod milp;
pub mod road_network;
pub mod solver;
pub mod transition_graph;

pub use error::{EamodError, Result};
