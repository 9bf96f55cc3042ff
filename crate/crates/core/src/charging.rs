//! Charging stations: FIFO queues, pile occupancy, battery bookkeeping and
//! the voltage droop controller.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::power::{average_voltage, bus_injections, solve_power_flow, PfOptions, PowerNetwork};
use crate::scenario::{BatteryParams, DroopParams, StationSite};
use crate::traffic::{Phase, Vehicle};

/// Charging power for system mean voltage `v_bar`: `p_min` below `v_ref1`,
/// `p_max` above `v_ref2`, linear in between.
pub fn droop_power(v_bar: f64, params: &DroopParams) -> f64 {
    let p_min = params.p_min_kw();
    if v_bar <= params.v_ref1 {
        p_min
    } else if v_bar >= params.v_ref2 {
        params.p_max_kw
    } else {
        params.alpha() * (v_bar - params.v_ref1) + p_min
    }
}

/// Solves power flow for the given per-station loads and returns the mean
/// bus voltage together with the droop setpoint it implies.
pub fn advance_droop_interval(
    net: &PowerNetwork,
    cs_loads_kw: &[f64],
    cs_buses: &[usize],
    params: &DroopParams,
) -> Result<(f64, f64)> {
    let inj = bus_injections(net, cs_loads_kw, cs_buses)?;
    let sol = solve_power_flow::<f64>(net, &inj, PfOptions::default())?;
    let v_bar = average_voltage(&sol);
    Ok((v_bar, droop_power(v_bar, params)))
}

/// Drains `dist_m` metres worth of energy. Returns `false`, leaving the
/// battery at zero, when the charge does not cover the distance.
pub fn consume_driving_energy(v: &mut Vehicle, dist_m: f64, battery: &BatteryParams) -> bool {
    let kwh = battery.rho_kwh_per_km * dist_m / 1000.0;
    let soc = v.soc - kwh / battery.capacity_kwh;
    if soc < 0.0 {
        v.soc = 0.0;
        false
    } else {
        v.soc = soc;
        true
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChargingStation {
    /// Position in the scenario's station list; this is what
    /// `Vehicle::target_cs` refers to.
    pub index: usize,
    pub site: StationSite,
    /// Waiting vehicle ids in arrival order.
    queue: VecDeque<usize>,
    /// Vehicle ids on a pile.
    charging: Vec<usize>,
    /// EVs assigned here and still on their way.
    pub pending: usize,
}

impl ChargingStation {
    pub fn new(index: usize, site: StationSite) -> Self {
        ChargingStation {
            index,
            site,
            queue: VecDeque::new(),
            charging: Vec::new(),
            pending: 0,
        }
    }

    pub fn queue(&self) -> impl Iterator<Item = usize> + '_ {
        self.queue.iter().copied()
    }

    pub fn charging(&self) -> &[usize] {
        &self.charging
    }

    pub fn num_queued(&self) -> usize {
        self.queue.len()
    }

    pub fn num_charging(&self) -> usize {
        self.charging.len()
    }

    /// Vehicles physically present (queued plus charging).
    pub fn occupancy(&self) -> usize {
        self.queue.len() + self.charging.len()
    }

    pub fn assign(&mut self) {
        self.pending += 1;
    }

    /// An assigned EV reached the station at `t`: it takes a free pile or
    /// joins the tail of the queue.
    pub fn submit_arrival(&mut self, v: &mut Vehicle, t: u64) -> Result<()> {
        if v.target_cs != Some(self.index) || v.phase != Phase::DrivingToCs {
            return Err(Error::Simulation(format!(
                "vehicle {} arrived at station {} without being assigned to it",
                v.id, self.site.id
            )));
        }
        self.pending = self.pending.saturating_sub(1);
        if self.charging.len() < self.site.piles {
            v.transition(Phase::Charging, t)?;
            self.charging.push(v.id);
        } else {
            v.transition(Phase::Queuing, t)?;
            self.queue.push_back(v.id);
        }
        Ok(())
    }

    /// Charges every plugged-in vehicle over `[t, t + dt)` at `setpoint_kw`.
    /// Vehicles reaching `soc_target` unplug at `t + dt` and are returned in
    /// pile order; freed piles go to the queue head at the same instant. The
    /// caller moves the returned vehicles out of the `Charging` phase.
    pub fn update_charging(
        &mut self,
        vehicles: &mut [Vehicle],
        dt: u64,
        setpoint_kw: f64,
        battery: &BatteryParams,
        soc_target: f64,
        t: u64,
    ) -> Result<Vec<usize>> {
        let kwh = battery.eta * setpoint_kw * dt as f64 / 3600.0;
        let mut done = Vec::new();
        self.charging.retain(|&id| {
            let v = &mut vehicles[id];
            v.soc += kwh / battery.capacity_kwh;
            v.charged_kwh += kwh;
            if v.soc >= soc_target {
                done.push(id);
                false
            } else {
                true
            }
        });
        while self.charging.len() < self.site.piles {
            let Some(id) = self.queue.pop_front() else { break };
            vehicles[id].transition(Phase::Charging, t + dt)?;
            self.charging.push(id);
        }
        Ok(done)
    }

    /// Charging draw of the whole station.
    pub fn aggregate_charging_load(&self, setpoint_kw: f64) -> f64 {
        setpoint_kw * self.charging.len() as f64
    }

    /// `(n_q, n_c, mean/std queue SoC, mean/std charging SoC, mean/std
    /// elapsed wait t - t_w of queued EVs, n_pt)`, population std.
    pub fn state_features(&self, vehicles: &[Vehicle], t: u64) -> [f64; 9] {
        let q_soc: Vec<f64> = self.queue.iter().map(|&i| vehicles[i].soc).collect();
        let c_soc: Vec<f64> = self.charging.iter().map(|&i| vehicles[i].soc).collect();
        let waits: Vec<f64> = self
            .queue
            .iter()
            .map(|&i| t.saturating_sub(vehicles[i].t_w.unwrap_or(t)) as f64)
            .collect();
        let (mq, sq) = mean_std(&q_soc);
        let (mc, sc) = mean_std(&c_soc);
        let (mw, sw) = mean_std(&waits);
        [
            self.queue.len() as f64,
            self.charging.len() as f64,
            mq,
            sq,
            mc,
            sc,
            mw,
            sw,
            self.pending as f64,
        ]
    }
}

/// Convenience wrapper matching [`ChargingStation::state_features`].
pub fn cs_state_features(cs: &ChargingStation, vehicles: &[Vehicle], t: u64) -> [f64; 9] {
    cs.state_features(vehicles, t)
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::traffic::VehicleKind;

    fn site(piles: usize) -> StationSite {
        StationSite {
            id: 0,
            node: 0,
            bus: 1,
            piles,
        }
    }

    fn ev(id: usize, soc: f64) -> Vehicle {
        let mut v = Vehicle::new(id, VehicleKind::Ev, 0, 1, 0, soc);
        v.transition(Phase::DrivingToCs, 0).unwrap();
        v.target_cs = Some(0);
        v
    }

    #[test]
    fn droop_examples() {
        let p = DroopParams::default();
        assert_eq!(droop_power(0.96, &p), 50.0);
        assert_eq!(droop_power(0.88, &p), 15.0);
        assert!((droop_power(0.925, &p) - 32.5).abs() < 1e-12);
    }

    #[test]
    fn full_station_queues_then_promotes_head() {
        let mut cs = ChargingStation::new(0, site(1));
        let mut vs = vec![ev(0, 0.79), ev(1, 0.5)];
        cs.assign();
        cs.assign();
        let (a, b) = vs.split_at_mut(1);
        cs.submit_arrival(&mut a[0], 10).unwrap();
        cs.submit_arrival(&mut b[0], 10).unwrap();
        assert_eq!((cs.num_charging(), cs.num_queued(), cs.pending), (1, 1, 0));
        assert_eq!(vs[1].phase, Phase::Queuing);
        let done = cs
            .update_charging(&mut vs, 60, 50.0, &BatteryParams::default(), 0.8, 10)
            .unwrap();
        assert_eq!(done, vec![0]);
        assert_eq!(cs.charging(), &[1]);
        assert_eq!(vs[1].t_c, Some(70));
    }

    #[test]
    fn charging_increment() {
        let mut cs = ChargingStation::new(0, site(2));
        let mut vs = vec![ev(0, 0.5)];
        cs.submit_arrival(&mut vs[0], 0).unwrap();
        cs.update_charging(&mut vs, 60, 50.0, &BatteryParams::default(), 0.8, 0).unwrap();
        assert!((vs[0].soc - 0.5 - 0.03125).abs() < 1e-15);
    }

    #[test]
    fn unassigned_arrival_rejected() {
        let mut cs = ChargingStation::new(0, site(1));
        let mut v = ev(0, 0.5);
        v.target_cs = Some(3);
        assert!(cs.submit_arrival(&mut v, 0).is_err());
    }

    #[test]
    fn feature_statistics() {
        let mut cs = ChargingStation::new(0, site(1));
        let mut vs = vec![ev(0, 0.6), ev(1, 0.3), ev(2, 0.5)];
        for i in 0..3 {
            let v = &mut vs[i];
            cs.submit_arrival(v, 0).unwrap();
        }
        let f = cs.state_features(&vs, 30);
        assert_eq!(f[0], 2.0);
        assert_eq!(f[1], 1.0);
        assert!((f[2] - 0.4).abs() < 1e-15 && (f[3] - 0.1).abs() < 1e-15);
        assert_eq!((f[4], f[5]), (0.6, 0.0));
        assert_eq!((f[6], f[7]), (30.0, 0.0));
    }

    #[test]
    fn driving_consumption() {
        let mut v = ev(0, 0.5);
        assert!(consume_driving_energy(&mut v, 10_000.0, &BatteryParams::default()));
        assert!((v.soc - (0.5 - 0.0625)).abs() < 1e-15);
        assert!(!consume_driving_energy(&mut v, 1e6, &BatteryParams::default()));
        assert_eq!(v.soc, 0.0);
    }
}
