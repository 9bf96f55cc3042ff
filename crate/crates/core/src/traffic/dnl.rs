use super::routing::speed;
use super::{Phase, RoadNetwork, Vehicle};
use crate::charging::consume_driving_energy;
use crate::error::{Error, Result};
use crate::scenario::BatteryParams;

/// Which vehicles are on which link.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrafficState {
    occupancy: Vec<Vec<usize>>,
    /// Ids of vehicles currently on a link, ascending.
    driving: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrafficEvent {
    /// Reached the end of a route leading to a charging station.
    ArrivedAtCs { vehicle: usize, t: u64 },
    /// Reached the trip destination.
    ArrivedAtDest { vehicle: usize, t: u64 },
    /// Battery ran flat on the road; the vehicle leaves the network.
    Stranded { vehicle: usize, t: u64 },
}

impl TrafficState {
    pub fn new(net: &RoadNetwork) -> Self {
        TrafficState {
            occupancy: vec![Vec::new(); net.num_links()],
            driving: Vec::new(),
        }
    }

    pub fn count(&self, link: usize) -> usize {
        self.occupancy[link].len()
    }

    pub fn num_driving(&self) -> usize {
        self.driving.len()
    }

    pub fn driving(&self) -> &[usize] {
        &self.driving
    }

    /// Puts a vehicle at the start of a non-empty `route`.
    pub fn enter(&mut self, v: &mut Vehicle, route: Vec<usize>) -> Result<()> {
        let first = *route.first().ok_or_else(|| {
            Error::Simulation(format!("vehicle {} entered the network with an empty route", v.id))
        })?;
        v.route = route;
        v.route_pos = 0;
        v.link_pos_m = 0.0;
        self.occupancy[first].push(v.id);
        if let Err(pos) = self.driving.binary_search(&v.id) {
            self.driving.insert(pos, v.id);
        }
        Ok(())
    }

    fn leave(&mut self, v: &Vehicle) {
        if let Some(l) = v.current_link() {
            self.occupancy[l].retain(|&id| id != v.id);
        }
        if let Ok(pos) = self.driving.binary_search(&v.id) {
            self.driving.remove(pos);
        }
    }
}

/// Densities `k_e` in veh/m/lane, in link order.
pub fn density_vector(state: &TrafficState, net: &RoadNetwork) -> Vec<f64> {
    net.links()
        .iter()
        .enumerate()
        .map(|(i, l)| (state.count(i) as f64 / (l.length_m * l.lanes as f64)).min(l.kjam))
        .collect()
}

/// Densities divided by jam density, clipped to 1.
pub fn normalized_densities(state: &TrafficState, net: &RoadNetwork) -> Vec<f64> {
    density_vector(state, net)
        .iter()
        .zip(net.links())
        .map(|(k, l)| (k / l.kjam).min(1.0))
        .collect()
}

/// Advances every driving vehicle over the tick `[t, t + dt)`.
///
/// Speeds come from a density snapshot taken before anyone moves. Time left
/// over after reaching a link end is spent on the next route link. Route ends
/// produce arrival events stamped `t + dt`; events come out in vehicle-id
/// order.
pub fn step_traffic(
    state: &mut TrafficState,
    net: &RoadNetwork,
    vehicles: &mut [Vehicle],
    battery: &BatteryParams,
    t: u64,
    dt: u64,
) -> Result<Vec<TrafficEvent>> {
    let density = density_vector(state, net);
    let mut events = Vec::new();
    let ids = state.driving.clone();
    for id in ids {
        let v = &mut vehicles[id];
        if !v.is_driving() {
            return Err(Error::Simulation(format!("vehicle {id} is on a link in phase {:?}", v.phase)));
        }
        let mut time_left = dt as f64;
        let mut moved = 0.0;
        let mut arrived = false;
        while time_left > 0.0 {
            let l = v
                .current_link()
                .ok_or_else(|| Error::Simulation(format!("vehicle {id} is driving without a route")))?;
            let link = &net.links()[l];
            let sp = speed(link, density[l]);
            let remaining = link.length_m - v.link_pos_m;
            if sp * time_left < remaining {
                v.link_pos_m += sp * time_left;
                moved += sp * time_left;
                break;
            }
            time_left -= remaining / sp;
            moved += remaining;
            state.occupancy[l].retain(|&x| x != id);
            v.route_pos += 1;
            v.link_pos_m = 0.0;
            match v.current_link() {
                Some(next) => state.occupancy[next].push(id),
                None => {
                    arrived = true;
                    break;
                }
            }
        }
        v.driven_m += moved;
        if v.is_ev() && !consume_driving_energy(v, moved, battery) {
            state.leave(v);
            v.transition(Phase::Stranded, t + dt)?;
            events.push(TrafficEvent::Stranded { vehicle: id, t: t + dt });
            continue;
        }
        if arrived {
            if let Ok(pos) = state.driving.binary_search(&id) {
                state.driving.remove(pos);
            }
            events.push(match v.phase {
                Phase::DrivingToCs => TrafficEvent::ArrivedAtCs { vehicle: id, t: t + dt },
                _ => TrafficEvent::ArrivedAtDest { vehicle: id, t: t + dt },
            });
        }
    }
    Ok(events)
}
