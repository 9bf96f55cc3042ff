//! Road network, shortest-path routing and the 1 s link-level loading model.

mod dnl;
mod network;
mod routing;
mod vehicle;

pub use dnl::{density_vector, normalized_densities, step_traffic, TrafficEvent, TrafficState};
pub use network::{Link, Node, RoadNetwork};
pub use routing::{distances_to, link_travel_time, shortest_path, V_MIN};
pub use vehicle::{record_trip_times, Phase, TripTimes, Vehicle, VehicleKind};
