use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VehicleKind {
    Ev,
    Cv,
}

/// Trip phases. EVs go DrivingToCs, Queuing, Charging, DrivingToDest, Done;
/// CVs go DrivingToDest, Done. `Stranded` is terminal for an EV whose battery
/// ran flat on the road.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Phase {
    Waiting,
    DrivingToCs,
    Queuing,
    Charging,
    DrivingToDest,
    Done,
    Stranded,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Vehicle {
    pub id: usize,
    pub kind: VehicleKind,
    /// Origin and destination node indices.
    pub origin: usize,
    pub destination: usize,
    pub depart_s: u64,
    pub route: Vec<usize>,
    /// Index into `route` of the link currently driven.
    pub route_pos: usize,
    pub link_pos_m: f64,
    pub phase: Phase,
    pub soc: f64,
    pub soc_init: f64,
    pub target_cs: Option<usize>,
    pub t_w: Option<u64>,
    pub t_c: Option<u64>,
    pub t_cp: Option<u64>,
    pub t_d: Option<u64>,
    /// Energy put into the battery, kWh.
    pub charged_kwh: f64,
    /// Distance driven, m.
    pub driven_m: f64,
}

impl Vehicle {
    pub fn new(id: usize, kind: VehicleKind, origin: usize, destination: usize, depart_s: u64, soc: f64) -> Self {
        Vehicle {
            id,
            kind,
            origin,
            destination,
            depart_s,
            route: Vec::new(),
            route_pos: 0,
            link_pos_m: 0.0,
            phase: Phase::Waiting,
            soc,
            soc_init: soc,
            target_cs: None,
            t_w: None,
            t_c: None,
            t_cp: None,
            t_d: None,
            charged_kwh: 0.0,
            driven_m: 0.0,
        }
    }

    pub fn is_ev(&self) -> bool {
        self.kind == VehicleKind::Ev
    }

    pub fn is_driving(&self) -> bool {
        matches!(self.phase, Phase::DrivingToCs | Phase::DrivingToDest)
    }

    /// True while the trip has started and not yet ended, i.e. the vehicle
    /// counts towards the loaded-vehicle total.
    pub fn is_loaded(&self) -> bool {
        !matches!(self.phase, Phase::Waiting | Phase::Done | Phase::Stranded)
    }

    pub fn current_link(&self) -> Option<usize> {
        self.route.get(self.route_pos).copied()
    }

    /// Moves to `next`, checking that the transition is allowed for this kind
    /// and that timestamps stay ordered.
    pub fn transition(&mut self, next: Phase, t: u64) -> Result<()> {
        use Phase::*;
        let ok = match (self.kind, self.phase, next) {
            (_, _, Stranded) => self.is_driving() && self.is_ev(),
            (VehicleKind::Ev, Waiting, DrivingToCs) => true,
            (VehicleKind::Ev, DrivingToCs, Queuing | Charging) => true,
            (VehicleKind::Ev, Queuing, Charging) => true,
            (VehicleKind::Ev, Charging, DrivingToDest | Done) => true,
            (VehicleKind::Cv, Waiting, DrivingToDest) => true,
            (_, DrivingToDest, Done) => true,
            _ => false,
        };
        if !ok {
            return Err(Error::Simulation(format!(
                "vehicle {} cannot go from {:?} to {next:?}",
                self.id, self.phase
            )));
        }
        let last = [Some(self.depart_s), self.t_w, self.t_c, self.t_cp]
            .into_iter()
            .flatten()
            .max()
            .unwrap_or(0);
        if t < last {
            return Err(Error::Simulation(format!(
                "vehicle {} timestamp {t} precedes {last}",
                self.id
            )));
        }
        match next {
            Queuing => self.t_w = Some(t),
            Charging => {
                self.t_w.get_or_insert(t);
                self.t_c = Some(t);
            }
            DrivingToDest if self.is_ev() => self.t_cp = Some(t),
            Done => {
                if self.phase == Charging {
                    self.t_cp = Some(t);
                }
                self.t_d = Some(t);
            }
            _ => {}
        }
        self.phase = next;
        Ok(())
    }
}

/// Per-trip time decomposition in seconds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TripTimes {
    pub driving: u64,
    pub waiting: u64,
    pub charging: u64,
}

impl TripTimes {
    pub fn total(&self) -> u64 {
        self.driving + self.waiting + self.charging
    }
}

pub fn record_trip_times(v: &Vehicle) -> Result<TripTimes> {
    let t_d = match (v.phase, v.t_d) {
        (Phase::Done, Some(t)) => t,
        _ => {
            return Err(Error::Simulation(format!("vehicle {} has not completed its trip", v.id)));
        }
    };
    match v.kind {
        VehicleKind::Cv => Ok(TripTimes {
            driving: t_d - v.depart_s,
            waiting: 0,
            charging: 0,
        }),
        VehicleKind::Ev => {
            let (t_w, t_c, t_cp) = match (v.t_w, v.t_c, v.t_cp) {
                (Some(a), Some(b), Some(c)) => (a, b, c),
                _ => return Err(Error::Simulation(format!("EV {} is missing charging timestamps", v.id))),
            };
            Ok(TripTimes {
                driving: (t_w - v.depart_s) + (t_d - t_cp),
                waiting: t_c - t_w,
                charging: t_cp - t_c,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ev_timeline_decomposes() {
        let mut v = Vehicle::new(0, VehicleKind::Ev, 0, 1, 0, 0.4);
        v.transition(Phase::DrivingToCs, 0).unwrap();
        v.transition(Phase::Queuing, 200).unwrap();
        v.transition(Phase::Charging, 260).unwrap();
        v.transition(Phase::DrivingToDest, 860).unwrap();
        v.transition(Phase::Done, 1100).unwrap();
        let tt = record_trip_times(&v).unwrap();
        assert_eq!((tt.driving, tt.waiting, tt.charging, tt.total()), (440, 60, 600, 1100));
    }

    #[test]
    fn cv_trip_and_early_call() {
        let mut v = Vehicle::new(0, VehicleKind::Cv, 0, 1, 0, 0.0);
        v.transition(Phase::DrivingToDest, 0).unwrap();
        assert!(record_trip_times(&v).is_err());
        v.transition(Phase::Done, 300).unwrap();
        let tt = record_trip_times(&v).unwrap();
        assert_eq!((tt.total(), tt.waiting, tt.charging), (300, 0, 0));
    }

    #[test]
    fn illegal_transitions_rejected() {
        let mut v = Vehicle::new(0, VehicleKind::Cv, 0, 1, 10, 0.0);
        assert!(v.transition(Phase::Charging, 20).is_err());
        v.transition(Phase::DrivingToDest, 10).unwrap();
        assert!(v.transition(Phase::Done, 5).is_err());
    }

    #[test]
    fn direct_charge_start_sets_equal_wait_stamps() {
        let mut v = Vehicle::new(0, VehicleKind::Ev, 0, 1, 0, 0.4);
        v.transition(Phase::DrivingToCs, 0).unwrap();
        v.transition(Phase::Charging, 50).unwrap();
        assert_eq!(v.t_w, v.t_c);
    }
}
