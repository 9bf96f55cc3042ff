//! The charging-recommendation CMDP built on the coupled simulation.

mod sim;

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use sim::{DroopRecord, EventRecord, GridSnapshot, LoadSample, Simulation, SlowSample, LOAD_SAMPLE_S};

use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::scenario::{RewardParams, Scenario};
use crate::traffic::{record_trip_times, Phase};

/// Result of one environment transition.
#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    /// Next observation; all zeros once `done`.
    pub observation: Vec<f64>,
    pub reward: f64,
    pub cost: f64,
    pub done: bool,
}

/// Episodic environment with a discrete action set, as seen by the agents.
pub trait Environment {
    fn observation_dim(&self) -> usize;
    fn num_actions(&self) -> usize;
    fn reset(&mut self, seed: u64) -> Result<Vec<f64>>;
    fn step(&mut self, action: usize) -> Result<Step>;

    /// Action of the rule-based baseline for the current state, if the
    /// environment has one.
    fn greedy_action(&self) -> Option<usize> {
        None
    }

    /// Summary of the episode that just ended, if the environment tracks one.
    fn completed_metrics(&self) -> Option<EpisodeMetrics> {
        None
    }
}

/// Trace line of one decision step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub t: u64,
    pub vehicle: usize,
    pub action: usize,
    /// Station actually used after the compliance draw.
    pub executed: usize,
    pub reward: f64,
    pub cost: f64,
    pub elapsed_sim_s: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeMetrics {
    /// Total travel time over completed trips, s.
    pub ttt_s: u64,
    /// Same quantity from per-tick loaded counts.
    pub ttt_tick_s: u64,
    /// Sum of per-step bus-averaged voltage deviations, p.u.
    pub cvv: f64,
    /// Mean waiting plus charging time per EV, s; 0 when there are no EVs.
    pub wct_s: f64,
    pub wct_defined: bool,
    pub num_vehicles: usize,
    pub num_ev: usize,
    pub steps: usize,
    pub stranded: usize,
    pub total_reward: f64,
}

/// Reward of a decision segment from its per-tick loaded counts.
///
/// Non-final segments use the mean count; the final one uses `w2` times the
/// segment's vehicle-seconds. `r = w1 (R_max - R)`.
pub fn compute_reward(counts: &[u32], fallback_count: u32, is_final: bool, params: &RewardParams) -> f64 {
    let r = if is_final {
        params.w2 * counts.iter().map(|&c| c as f64).sum::<f64>()
    } else if counts.is_empty() {
        fallback_count as f64
    } else {
        counts.iter().map(|&c| c as f64).sum::<f64>() / counts.len() as f64
    };
    params.w1 * (params.r_max - r)
}

#[derive(Clone, Debug)]
struct Request {
    vehicle: usize,
    t: u64,
    loads: Vec<f64>,
}

const STREAM_COMPLIANCE: u64 = 21;

/// Station-recommendation environment. Each step answers one EV's charging
/// request; the simulation then runs until the next request.
///
/// Observation: origin and destination coordinates and SoC of the requesting
/// EV, normalised link densities, nine features per station, and a zeroed
/// slot of `decoder_len * stations` entries reserved for demand forecasts.
#[derive(Clone, Debug)]
pub struct ChargingEnv {
    sc: Arc<Scenario>,
    sim: Option<Simulation>,
    compliance: f64,
    compliance_rng: ChaCha8Rng,
    record_events: bool,
    request: Option<Request>,
    steps: Vec<StepRecord>,
}

impl ChargingEnv {
    pub fn new(sc: Arc<Scenario>) -> Self {
        ChargingEnv {
            sc,
            sim: None,
            compliance: 1.0,
            compliance_rng: stream_rng(0, STREAM_COMPLIANCE),
            record_events: false,
            request: None,
            steps: Vec::new(),
        }
    }

    pub fn scenario(&self) -> &Arc<Scenario> {
        &self.sc
    }

    /// Probability that an EV follows the recommendation instead of going to
    /// the closest station.
    pub fn set_compliance(&mut self, rate: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&rate) {
            return Err(Error::invalid("compliance", format!("must lie in [0, 1], got {rate}")));
        }
        self.compliance = rate;
        Ok(())
    }

    pub fn compliance(&self) -> f64 {
        self.compliance
    }

    pub fn set_record_events(&mut self, on: bool) {
        self.record_events = on;
    }

    pub fn num_stations(&self) -> usize {
        self.sc.stations.len()
    }

    /// Width of the observation without the forecast slot.
    pub fn base_dim(&self) -> usize {
        5 + self.sc.road.num_links() + 9 * self.num_stations()
    }

    pub fn augmentation_dim(&self) -> usize {
        self.sc.config.predictor.decoder_len * self.num_stations()
    }

    pub fn sim(&self) -> Option<&Simulation> {
        self.sim.as_ref()
    }

    pub fn steps(&self) -> &[StepRecord] {
        &self.steps
    }

    /// Vehicle id of the pending request.
    pub fn pending_vehicle(&self) -> Option<usize> {
        self.request.as_ref().map(|r| r.vehicle)
    }

    fn sim_ref(&self) -> Result<&Simulation> {
        self.sim.as_ref().ok_or(Error::NoPendingRequest)
    }

    fn observe(&self) -> Result<Vec<f64>> {
        let sim = self.sim_ref()?;
        let req = self.request.as_ref().ok_or(Error::NoPendingRequest)?;
        let v = &sim.vehicles()[req.vehicle];
        let (ox, oy) = self.sc.road.normalized_coords(v.origin);
        let (dx, dy) = self.sc.road.normalized_coords(v.destination);
        let mut obs = Vec::with_capacity(self.observation_dim());
        obs.extend_from_slice(&[ox, oy, dx, dy, v.soc]);
        obs.extend(sim.normalized_densities());
        obs.extend(sim.station_features());
        obs.resize(self.base_dim() + self.augmentation_dim(), 0.0);
        Ok(obs)
    }

    pub fn episode_metrics(&self) -> Result<EpisodeMetrics> {
        let sim = self.sim_ref().map_err(|_| Error::EpisodeNotTerminal)?;
        if !sim.is_finished() {
            return Err(Error::EpisodeNotTerminal);
        }
        let mut wct = 0u64;
        let mut n_ev = 0usize;
        for v in sim.vehicles().iter().filter(|v| v.is_ev() && v.phase == Phase::Done) {
            let tt = record_trip_times(v)?;
            wct += tt.waiting + tt.charging;
            n_ev += 1;
        }
        Ok(EpisodeMetrics {
            ttt_s: sim.total_travel_time()?,
            ttt_tick_s: sim.tick_travel_time(),
            cvv: self.steps.iter().map(|s| s.cost).sum(),
            wct_s: if n_ev > 0 { wct as f64 / n_ev as f64 } else { 0.0 },
            wct_defined: n_ev > 0,
            num_vehicles: sim.vehicles().len(),
            num_ev: sim.vehicles().iter().filter(|v| v.is_ev()).count(),
            steps: self.steps.len(),
            stranded: sim.stranded(),
            total_reward: self.steps.iter().map(|s| s.reward).sum(),
        })
    }
}

impl Environment for ChargingEnv {
    fn observation_dim(&self) -> usize {
        self.base_dim() + self.augmentation_dim()
    }

    fn num_actions(&self) -> usize {
        self.num_stations()
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        let mut sim = Simulation::new(Arc::clone(&self.sc), seed, self.record_events)?;
        self.compliance_rng = stream_rng(seed, STREAM_COMPLIANCE);
        self.steps.clear();
        self.request = None;
        let first = sim.advance()?;
        let Some(vehicle) = first else {
            self.sim = Some(sim);
            return Err(Error::NoDecisionSteps);
        };
        self.request = Some(Request {
            vehicle,
            t: sim.time(),
            loads: sim.station_loads(),
        });
        self.sim = Some(sim);
        self.observe()
    }

    fn step(&mut self, action: usize) -> Result<Step> {
        let m = self.num_stations();
        if action >= m {
            return Err(Error::InvalidAction { action, num_actions: m });
        }
        let req = self.request.take().ok_or(Error::NoPendingRequest)?;
        let follow = self.compliance_rng.gen::<f64>() < self.compliance;
        let sim = self.sim.as_mut().ok_or(Error::NoPendingRequest)?;
        let executed = if follow {
            action
        } else {
            sim.greedy_station(sim.vehicles()[req.vehicle].origin)?
        };
        sim.dispatch_ev(req.vehicle, executed)?;
        let next = sim.advance()?;
        let t_next = sim.time();
        let done = next.is_none();
        let counts = &sim.tick_counts()[req.t as usize..t_next as usize];
        let fallback = sim.tick_counts().get((req.t as usize).wrapping_sub(1)).copied().unwrap_or(0);
        let reward = compute_reward(counts, fallback, done, &self.sc.config.reward);
        let loads = match sim.peak_sample(req.t, t_next) {
            Some(s) => s.loads_kw.clone(),
            None => req.loads.clone(),
        };
        let cost = sim.grid(&loads)?.mean_deviation;
        self.steps.push(StepRecord {
            step: self.steps.len(),
            t: req.t,
            vehicle: req.vehicle,
            action,
            executed,
            reward,
            cost,
            elapsed_sim_s: t_next - req.t,
        });
        if let Some(vehicle) = next {
            self.request = Some(Request {
                vehicle,
                t: t_next,
                loads: sim.station_loads(),
            });
            let observation = self.observe()?;
            Ok(Step {
                observation,
                reward,
                cost,
                done,
            })
        } else {
            Ok(Step {
                observation: vec![0.0; self.observation_dim()],
                reward,
                cost,
                done,
            })
        }
    }

    fn completed_metrics(&self) -> Option<EpisodeMetrics> {
        self.episode_metrics().ok()
    }

    fn greedy_action(&self) -> Option<usize> {
        let sim = self.sim.as_ref()?;
        let req = self.request.as_ref()?;
        sim.greedy_station(sim.vehicles()[req.vehicle].origin).ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reward_branches() {
        let p = RewardParams::default();
        assert!((compute_reward(&[80; 10], 0, false, &p) - 0.4).abs() < 1e-12);
        assert!((compute_reward(&[0; 3], 0, false, &p) - 1.2).abs() < 1e-12);
        assert!((compute_reward(&[], 80, false, &p) - 0.4).abs() < 1e-12);
        let ticks = vec![50u32; 100];
        assert!((compute_reward(&ticks, 0, true, &p) - 0.2).abs() < 1e-12);
    }
}
