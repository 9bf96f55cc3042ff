use std::collections::HashMap;
use std::sync::Arc;

use crate::charging::{droop_power, ChargingStation};
use crate::error::{Error, Result};
use crate::power::{average_voltage, bus_injections, solve_power_flow, voltage_deviation, PfOptions};
use crate::scenario::{generate_trips, Scenario, TripPlan};
use crate::traffic::{
    distances_to, link_travel_time, normalized_densities, record_trip_times, shortest_path, step_traffic, Phase,
    TrafficEvent, TrafficState, Vehicle, VehicleKind,
};

/// Spacing of the load samples used to locate peak-load instants, s.
pub const LOAD_SAMPLE_S: u64 = 60;

/// Extra simulated time allowed after the demand horizon before an episode
/// is declared stuck, s.
const DRAIN_LIMIT_S: u64 = 86_400;

/// Station loads at one sampled instant.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadSample {
    pub t: u64,
    pub setpoint_kw: f64,
    pub loads_kw: Vec<f64>,
    /// Queued plus charging vehicles per station.
    pub occupancy: Vec<usize>,
}

impl LoadSample {
    pub fn total_kw(&self) -> f64 {
        self.loads_kw.iter().sum()
    }
}

/// One slow-timescale record for the demand predictor.
#[derive(Clone, Debug, PartialEq)]
pub struct SlowSample {
    pub t: u64,
    /// Normalised station features at `t`.
    pub features: Vec<f64>,
    /// Mean queued-plus-charging count per station over `(t - w, t]`.
    pub demand: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DroopRecord {
    pub interval: usize,
    pub t: u64,
    pub v_bar: f64,
    pub setpoint_kw: f64,
    pub occupancy: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EventRecord {
    pub t: u64,
    pub vehicle: usize,
    pub event: &'static str,
    pub place: String,
}

/// Bus-averaged voltage figures of one power-flow solve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSnapshot {
    pub v_bar: f64,
    pub mean_deviation: f64,
}

/// The coupled traffic / charging / grid simulation of one episode.
///
/// Each second `t` is processed as: controller-interval boundary, load and
/// predictor samples, departures (EV requests may pause here), then the tick
/// itself: the loaded-vehicle count is recorded, stations charge, vehicles
/// move, and everything that finishes during the tick is stamped `t + 1`.
#[derive(Clone, Debug)]
pub struct Simulation {
    sc: Arc<Scenario>,
    trips: Vec<TripPlan>,
    vehicles: Vec<Vehicle>,
    stations: Vec<ChargingStation>,
    traffic: TrafficState,
    t: u64,
    next_trip: usize,
    tick_ready: bool,
    loaded: usize,
    setpoint_kw: f64,
    tick_counts: Vec<u32>,
    samples: Vec<LoadSample>,
    occupancy_samples: Vec<(u64, Vec<usize>)>,
    slow: Vec<SlowSample>,
    droop_log: Vec<DroopRecord>,
    events: Option<Vec<EventRecord>>,
    stranded: usize,
    stranded_ticks: u64,
    /// `cs_dist[m][node]`: road distance from `node` to station `m`, m.
    cs_dist: Arc<Vec<Vec<f64>>>,
    cs_buses: Vec<usize>,
    pf_cache: HashMap<Vec<u64>, GridSnapshot>,
    finished: bool,
}

impl Simulation {
    pub fn new(sc: Arc<Scenario>, seed: u64, record_events: bool) -> Result<Self> {
        let cfg = &sc.config;
        let trips = generate_trips(&cfg.demand, &sc.road, cfg.horizon_s(), seed)?;
        let vehicles = trips
            .iter()
            .map(|p| Vehicle::new(p.id, p.kind, p.origin, p.destination, p.depart_s, p.soc_init))
            .collect();
        let stations = sc
            .stations
            .iter()
            .enumerate()
            .map(|(i, s)| ChargingStation::new(i, s.clone()))
            .collect();
        let lengths = sc.road.lengths();
        let cs_dist = Arc::new(sc.stations.iter().map(|s| distances_to(&sc.road, &lengths, s.node)).collect());
        let cs_buses = sc.stations.iter().map(|s| s.bus).collect();
        let mut sim = Simulation {
            traffic: TrafficState::new(&sc.road),
            trips,
            vehicles,
            stations,
            t: 0,
            next_trip: 0,
            tick_ready: false,
            loaded: 0,
            setpoint_kw: 0.0,
            tick_counts: Vec::new(),
            samples: Vec::new(),
            occupancy_samples: Vec::new(),
            slow: Vec::new(),
            droop_log: Vec::new(),
            events: record_events.then(Vec::new),
            stranded: 0,
            stranded_ticks: 0,
            cs_dist,
            cs_buses,
            pf_cache: HashMap::new(),
            finished: false,
            sc,
        };
        let zero = vec![0.0; sim.stations.len()];
        let grid = sim.grid(&zero)?;
        sim.setpoint_kw = droop_power(grid.v_bar, &sim.sc.config.droop);
        sim.droop_log.push(DroopRecord {
            interval: 0,
            t: 0,
            v_bar: grid.v_bar,
            setpoint_kw: sim.setpoint_kw,
            occupancy: vec![0; sim.stations.len()],
        });
        Ok(sim)
    }

    pub fn scenario(&self) -> &Scenario {
        &self.sc
    }

    pub fn time(&self) -> u64 {
        self.t
    }

    pub fn vehicles(&self) -> &[Vehicle] {
        &self.vehicles
    }

    pub fn stations(&self) -> &[ChargingStation] {
        &self.stations
    }

    pub fn traffic(&self) -> &TrafficState {
        &self.traffic
    }

    pub fn setpoint_kw(&self) -> f64 {
        self.setpoint_kw
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    /// Loaded-vehicle count of every executed tick, indexed by time.
    pub fn tick_counts(&self) -> &[u32] {
        &self.tick_counts
    }

    pub fn load_samples(&self) -> &[LoadSample] {
        &self.samples
    }

    pub fn slow_samples(&self) -> &[SlowSample] {
        &self.slow
    }

    pub fn droop_log(&self) -> &[DroopRecord] {
        &self.droop_log
    }

    pub fn events(&self) -> Option<&[EventRecord]> {
        self.events.as_deref()
    }

    pub fn stranded(&self) -> usize {
        self.stranded
    }

    /// Loaded ticks accumulated by vehicles that later stranded.
    pub fn stranded_ticks(&self) -> u64 {
        self.stranded_ticks
    }

    pub fn num_loaded(&self) -> usize {
        self.loaded
    }

    pub fn is_control_time(&self, t: u64) -> bool {
        let c = &self.sc.config;
        t >= c.warmup_s && t < c.warmup_s + c.control_s
    }

    /// Current per-station charging draw.
    pub fn station_loads(&self) -> Vec<f64> {
        self.stations
            .iter()
            .map(|s| s.aggregate_charging_load(self.setpoint_kw))
            .collect()
    }

    /// Power-flow summary for the given station loads, memoised.
    pub fn grid(&mut self, loads_kw: &[f64]) -> Result<GridSnapshot> {
        let key: Vec<u64> = loads_kw.iter().map(|x| x.to_bits()).collect();
        if let Some(g) = self.pf_cache.get(&key) {
            return Ok(*g);
        }
        let inj = bus_injections(&self.sc.power, loads_kw, &self.cs_buses)?;
        let sol = solve_power_flow::<f64>(&self.sc.power, &inj, PfOptions::default())
            .map_err(|e| e.context(format!("power flow at t = {}", self.t)))?;
        let g = GridSnapshot {
            v_bar: average_voltage(&sol),
            mean_deviation: voltage_deviation(&sol, 1.0).1,
        };
        self.pf_cache.insert(key, g);
        Ok(g)
    }

    /// Sample with the largest total load among those taken in `[from, to)`;
    /// the earliest wins ties.
    pub fn peak_sample(&self, from: u64, to: u64) -> Option<&LoadSample> {
        let start = self.samples.partition_point(|s| s.t < from);
        self.samples[start..]
            .iter()
            .take_while(|s| s.t < to)
            .fold(None, |best: Option<&LoadSample>, s| match best {
                Some(b) if b.total_kw() >= s.total_kw() => Some(b),
                _ => Some(s),
            })
    }

    /// Closest station by road distance from `node`; lowest station id on ties.
    pub fn greedy_station(&self, node: usize) -> Result<usize> {
        let mut best: Option<usize> = None;
        for (m, d) in self.cs_dist.iter().enumerate() {
            if !d[node].is_finite() {
                continue;
            }
            best = match best {
                Some(b)
                    if self.cs_dist[b][node] < d[node]
                        || (self.cs_dist[b][node] == d[node] && self.stations[b].site.id < self.stations[m].site.id) =>
                {
                    Some(b)
                }
                _ => Some(m),
            };
        }
        best.ok_or_else(|| Error::Unreachable {
            from: self.sc.road.nodes()[node].id,
            to: self.sc.road.nodes()[self.stations[0].site.node].id,
        })
    }

    fn log(&mut self, t: u64, vehicle: usize, event: &'static str, place: String) {
        if let Some(ev) = self.events.as_mut() {
            ev.push(EventRecord { t, vehicle, event, place });
        }
    }

    fn travel_times(&self) -> Vec<f64> {
        let dens = crate::traffic::density_vector(&self.traffic, &self.sc.road);
        self.sc
            .road
            .links()
            .iter()
            .zip(&dens)
            .map(|(l, &k)| link_travel_time(l, k))
            .collect()
    }

    fn route(&self, from: usize, to: usize) -> Result<Vec<usize>> {
        if from == to {
            return Ok(Vec::new());
        }
        Ok(shortest_path(&self.sc.road, &self.travel_times(), from, to)?.0)
    }

    /// Normalised station features: counts over pile count, waits in hours.
    pub fn station_features(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(9 * self.stations.len());
        for cs in &self.stations {
            let f = cs.state_features(&self.vehicles, self.t);
            let piles = cs.site.piles as f64;
            out.extend_from_slice(&[
                f[0] / piles,
                f[1] / piles,
                f[2],
                f[3],
                f[4],
                f[5],
                f[6] / 3600.0,
                f[7] / 3600.0,
                f[8] / piles,
            ]);
        }
        out
    }

    pub fn normalized_densities(&self) -> Vec<f64> {
        normalized_densities(&self.traffic, &self.sc.road)
    }

    /// Controller boundary and the samples due at the current second.
    fn prepare_tick(&mut self) -> Result<()> {
        let t = self.t;
        let sc = Arc::clone(&self.sc);
        let cfg = &sc.config;
        let ctrl = cfg.controller_interval_s;
        if t > 0 && t % ctrl == 0 {
            let loads = match self.peak_sample(t - ctrl, t) {
                Some(s) => s.loads_kw.clone(),
                None => self.station_loads(),
            };
            let g = self.grid(&loads)?;
            self.setpoint_kw = droop_power(g.v_bar, &cfg.droop);
            self.droop_log.push(DroopRecord {
                interval: (t / ctrl) as usize,
                t,
                v_bar: g.v_bar,
                setpoint_kw: self.setpoint_kw,
                occupancy: self.stations.iter().map(ChargingStation::occupancy).collect(),
            });
        }
        if t % LOAD_SAMPLE_S == 0 {
            self.samples.push(LoadSample {
                t,
                setpoint_kw: self.setpoint_kw,
                loads_kw: self.station_loads(),
                occupancy: self.stations.iter().map(ChargingStation::occupancy).collect(),
            });
        }
        let p = &cfg.predictor;
        if t % p.sample_interval_s == 0 {
            self.occupancy_samples
                .push((t, self.stations.iter().map(ChargingStation::occupancy).collect()));
        }
        if t > 0 && t % p.step_interval_s == 0 {
            let from = t - p.step_interval_s;
            let window: Vec<&Vec<usize>> = self
                .occupancy_samples
                .iter()
                .filter(|(st, _)| *st > from && *st <= t)
                .map(|(_, o)| o)
                .collect();
            let n = window.len().max(1) as f64;
            let demand = (0..self.stations.len())
                .map(|m| window.iter().map(|o| o[m] as f64).sum::<f64>() / n)
                .collect();
            self.occupancy_samples.retain(|(st, _)| *st > from);
            self.slow.push(SlowSample {
                t,
                features: self.station_features(),
                demand,
            });
        }
        Ok(())
    }

    /// Runs until an EV departing in the control phase needs a station, and
    /// returns its id, or until every trip is over (`None`). Requests before
    /// the control phase, and after it, are served by the greedy rule.
    pub fn advance(&mut self) -> Result<Option<usize>> {
        loop {
            if self.finished {
                return Ok(None);
            }
            if !self.tick_ready {
                self.prepare_tick()?;
                self.tick_ready = true;
            }
            while self.next_trip < self.trips.len() && self.trips[self.next_trip].depart_s == self.t {
                let id = self.next_trip;
                self.next_trip += 1;
                match self.trips[id].kind {
                    VehicleKind::Cv => self.depart_cv(id)?,
                    VehicleKind::Ev if self.is_control_time(self.t) => return Ok(Some(id)),
                    VehicleKind::Ev => {
                        let cs = self.greedy_station(self.vehicles[id].origin)?;
                        self.dispatch_ev(id, cs)?;
                    }
                }
            }
            if self.next_trip == self.trips.len() && self.loaded == 0 {
                self.finished = true;
                return Ok(None);
            }
            if self.t > self.sc.config.horizon_s() + DRAIN_LIMIT_S {
                return Err(Error::Simulation(format!(
                    "{} vehicles still travelling at t = {}",
                    self.loaded, self.t
                )));
            }
            self.execute_tick()?;
        }
    }

    fn depart_cv(&mut self, id: usize) -> Result<()> {
        let t = self.t;
        let (o, d) = (self.vehicles[id].origin, self.vehicles[id].destination);
        let route = self.route(o, d)?;
        self.vehicles[id].transition(Phase::DrivingToDest, t)?;
        self.loaded += 1;
        self.log(t, id, "depart", format!("node {}", self.sc.road.nodes()[o].id));
        if route.is_empty() {
            self.vehicles[id].transition(Phase::Done, t)?;
            self.loaded -= 1;
            return Ok(());
        }
        self.traffic.enter(&mut self.vehicles[id], route)
    }

    /// Sends the EV `id`, departing now, to station index `cs`.
    pub fn dispatch_ev(&mut self, id: usize, cs: usize) -> Result<()> {
        let t = self.t;
        if cs >= self.stations.len() {
            return Err(Error::InvalidAction {
                action: cs,
                num_actions: self.stations.len(),
            });
        }
        let origin = self.vehicles[id].origin;
        let route = self.route(origin, self.stations[cs].site.node)?;
        let v = &mut self.vehicles[id];
        v.target_cs = Some(cs);
        v.transition(Phase::DrivingToCs, t)?;
        self.loaded += 1;
        self.stations[cs].assign();
        let place = format!("cs {}", self.stations[cs].site.id);
        self.log(t, id, "depart", place.clone());
        if route.is_empty() {
            self.stations[cs].submit_arrival(&mut self.vehicles[id], t)?;
            self.log(t, id, "arrive_cs", place);
            Ok(())
        } else {
            self.traffic.enter(&mut self.vehicles[id], route)
        }
    }

    fn execute_tick(&mut self) -> Result<()> {
        let t = self.t;
        self.tick_counts.push(self.loaded as u32);
        let cfg = &self.sc.config;
        let (battery, soc_target) = (cfg.battery, cfg.demand.soc_target);
        let mut completed = Vec::new();
        for cs in &mut self.stations {
            for id in cs.update_charging(&mut self.vehicles, 1, self.setpoint_kw, &battery, soc_target, t)? {
                completed.push((id, cs.site.node, cs.site.id));
            }
        }
        let events = step_traffic(&mut self.traffic, &self.sc.road, &mut self.vehicles, &battery, t, 1)?;
        for (id, node, cs_id) in completed {
            let dest = self.vehicles[id].destination;
            let route = self.route(node, dest)?;
            self.log(t + 1, id, "leave_cs", format!("cs {cs_id}"));
            if route.is_empty() {
                self.vehicles[id].transition(Phase::Done, t + 1)?;
                self.loaded -= 1;
                self.log(t + 1, id, "finish", format!("node {}", self.sc.road.nodes()[dest].id));
            } else {
                self.vehicles[id].transition(Phase::DrivingToDest, t + 1)?;
                self.traffic.enter(&mut self.vehicles[id], route)?;
            }
        }
        for ev in events {
            match ev {
                TrafficEvent::ArrivedAtCs { vehicle, t } => {
                    let cs = self.vehicles[vehicle]
                        .target_cs
                        .ok_or_else(|| Error::Simulation(format!("vehicle {vehicle} reached a station unassigned")))?;
                    self.stations[cs].submit_arrival(&mut self.vehicles[vehicle], t)?;
                    let place = format!("cs {}", self.stations[cs].site.id);
                    self.log(t, vehicle, "arrive_cs", place);
                }
                TrafficEvent::ArrivedAtDest { vehicle, t } => {
                    self.vehicles[vehicle].transition(Phase::Done, t)?;
                    self.loaded -= 1;
                    let node = self.sc.road.nodes()[self.vehicles[vehicle].destination].id;
                    self.log(t, vehicle, "finish", format!("node {node}"));
                }
                TrafficEvent::Stranded { vehicle, t } => {
                    self.loaded -= 1;
                    self.stranded += 1;
                    let v = &self.vehicles[vehicle];
                    if let (Some(cs), None) = (v.target_cs, v.t_w) {
                        self.stations[cs].pending = self.stations[cs].pending.saturating_sub(1);
                    }
                    self.stranded_ticks += t - self.vehicles[vehicle].depart_s;
                    self.log(t, vehicle, "stranded", String::new());
                }
            }
        }
        self.t += 1;
        self.tick_ready = false;
        Ok(())
    }

    /// Sum of per-vehicle trip times over completed trips.
    pub fn total_travel_time(&self) -> Result<u64> {
        let mut total = 0;
        for v in self.vehicles.iter().filter(|v| v.phase == Phase::Done) {
            total += record_trip_times(v)?.total();
        }
        Ok(total)
    }

    /// Vehicle-seconds from the per-tick loaded counts, stranded EVs removed.
    pub fn tick_travel_time(&self) -> u64 {
        self.tick_counts.iter().map(|&c| c as u64).sum::<u64>() - self.stranded_ticks
    }

    /// Checks that every departed vehicle is on a link, at a station or done.
    pub fn check_conservation(&self) -> Result<()> {
        let departed = self.vehicles.iter().filter(|v| v.phase != Phase::Waiting).count();
        let at_cs: usize = self.stations.iter().map(ChargingStation::occupancy).sum();
        let ended = self
            .vehicles
            .iter()
            .filter(|v| matches!(v.phase, Phase::Done | Phase::Stranded))
            .count();
        let on_links = self.traffic.num_driving();
        if departed != on_links + at_cs + ended {
            return Err(Error::Simulation(format!(
                "conservation broken at t = {}: {departed} departed, {on_links} driving, {at_cs} at stations, {ended} ended",
                self.t
            )));
        }
        Ok(())
    }
}
