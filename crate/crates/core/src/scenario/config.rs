use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Declarative description of one coupled traffic / grid experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub seed: u64,
    /// Directory holding `nodes.csv` and `links.csv`; relative paths are
    /// resolved against the scenario file.
    pub road_net: PathBuf,
    /// Directory holding `buses.csv` and `lines.csv`.
    pub power_net: PathBuf,
    #[serde(default = "default_warmup")]
    pub warmup_s: u64,
    #[serde(default = "default_control")]
    pub control_s: u64,
    #[serde(default = "default_controller_interval")]
    pub controller_interval_s: u64,
    pub demand: DemandSpec,
    #[serde(rename = "charging_station")]
    pub stations: Vec<StationSpec>,
    #[serde(default)]
    pub droop: DroopParams,
    #[serde(default)]
    pub battery: BatteryParams,
    #[serde(default)]
    pub reward: RewardParams,
    #[serde(default)]
    pub srl: TrainConfig,
    #[serde(default)]
    pub predictor: PredictorConfig,
}

fn default_name() -> String {
    "scenario".into()
}

fn default_warmup() -> u64 {
    1200
}

fn default_control() -> u64 {
    3600
}

fn default_controller_interval() -> u64 {
    600
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationSpec {
    pub id: u32,
    /// Road node the station sits on.
    pub node: u32,
    /// Distribution bus it draws from.
    pub bus: u32,
    pub piles: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandSpec {
    /// Vehicles per hour.
    pub total_rate: f64,
    pub ev_fraction: f64,
    #[serde(default = "default_soc_low")]
    pub soc_init_low: f64,
    #[serde(default = "default_soc_high")]
    pub soc_init_high: f64,
    #[serde(default = "default_soc_target")]
    pub soc_target: f64,
    #[serde(default)]
    pub od: OdMode,
}

fn default_soc_low() -> f64 {
    0.30
}

fn default_soc_high() -> f64 {
    0.60
}

fn default_soc_target() -> f64 {
    0.80
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum OdMode {
    /// Every ordered pair of distinct, mutually reachable nodes is equally likely.
    #[default]
    Uniform,
    /// Pairs drawn with probability proportional to `weight`.
    Table { pairs: Vec<OdPair> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OdPair {
    pub origin: u32,
    pub destination: u32,
    pub weight: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DroopParams {
    pub v_ref1: f64,
    pub v_ref2: f64,
    pub p_max_kw: f64,
    pub delta_min_frac: f64,
}

impl Default for DroopParams {
    fn default() -> Self {
        DroopParams {
            v_ref1: 0.90,
            v_ref2: 0.95,
            p_max_kw: 50.0,
            delta_min_frac: 0.30,
        }
    }
}

impl DroopParams {
    pub fn p_min_kw(&self) -> f64 {
        self.delta_min_frac * self.p_max_kw
    }

    /// Slope of the linear segment, kW per p.u.
    pub fn alpha(&self) -> f64 {
        (self.p_max_kw - self.p_min_kw()) / (self.v_ref2 - self.v_ref1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatteryParams {
    pub capacity_kwh: f64,
    pub eta: f64,
    pub rho_kwh_per_km: f64,
}

impl Default for BatteryParams {
    fn default() -> Self {
        BatteryParams {
            capacity_kwh: 24.0,
            eta: 0.9,
            rho_kwh_per_km: 0.15,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardParams {
    pub w1: f64,
    pub r_max: f64,
    pub w2: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        RewardParams {
            w1: 0.01,
            r_max: 120.0,
            w2: 0.02,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub episodes_per_epoch: usize,
    pub batch_size: usize,
    pub update_iters: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_eps: f64,
    pub entropy_coef: f64,
    pub lambda_lr: f64,
    pub lambda_init: f64,
    pub cost_limit: f64,
    pub hidden: usize,
    pub hidden_layers: usize,
    pub max_grad_norm: f64,
    pub normalize_advantages: bool,
    /// Use discounted instead of plain per-episode cost sums for the
    /// multiplier update.
    pub discounted_cost_return: bool,
    pub seeds: Vec<u64>,
    pub dqn_replay: usize,
    pub dqn_target_sync: usize,
    pub dqn_eps_start: f64,
    pub dqn_eps_end: f64,
    /// Decisions over which DQN exploration anneals linearly.
    pub dqn_eps_decay_steps: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            episodes_per_epoch: 5,
            batch_size: 64,
            update_iters: 40,
            actor_lr: 3e-4,
            critic_lr: 3e-4,
            gamma: 0.97,
            gae_lambda: 0.95,
            clip_eps: 0.2,
            entropy_coef: 0.01,
            lambda_lr: 0.035,
            lambda_init: 0.0,
            cost_limit: 0.0,
            hidden: 64,
            hidden_layers: 2,
            max_grad_norm: 0.5,
            normalize_advantages: true,
            discounted_cost_return: false,
            seeds: vec![0, 1, 2, 3, 4],
            dqn_replay: 10_000,
            dqn_target_sync: 200,
            dqn_eps_start: 1.0,
            dqn_eps_end: 0.05,
            dqn_eps_decay_steps: 20_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictorConfig {
    pub encoder_len: usize,
    pub decoder_len: usize,
    /// Slow-timescale step `w`, s.
    pub step_interval_s: u64,
    pub sample_interval_s: u64,
    pub hidden: usize,
    pub layers: usize,
    pub dropout: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub train_iters: usize,
    /// Minimum pair count before training starts.
    pub min_pairs: usize,
    /// Train whenever the pair count is a multiple of this.
    pub train_every: usize,
    pub converge_window: usize,
    pub converge_tol: f64,
    /// EMA weight on the newest loss when smoothing.
    pub smoothing: f64,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        PredictorConfig {
            encoder_len: 5,
            decoder_len: 5,
            step_interval_s: 240,
            sample_interval_s: 60,
            hidden: 256,
            layers: 2,
            dropout: 0.5,
            lr: 1e-3,
            batch_size: 64,
            train_iters: 20,
            min_pairs: 64,
            train_every: 50,
            converge_window: 10,
            converge_tol: 0.02,
            smoothing: 0.3,
        }
    }
}

fn check(ok: bool, field: &str, reason: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::invalid(field, reason()))
    }
}

impl ScenarioConfig {
    /// Checks every invariant that does not need the network tables.
    pub fn validate(&self) -> Result<()> {
        check(self.warmup_s > 0, "warmup_s", || "must be positive".into())?;
        check(self.control_s > 0, "control_s", || "must be positive".into())?;
        check(
            self.controller_interval_s > 0 && self.control_s % self.controller_interval_s == 0,
            "controller_interval_s",
            || {
                format!(
                    "{} does not divide the control period of {} s",
                    self.controller_interval_s, self.control_s
                )
            },
        )?;
        let d = &self.demand;
        check(d.total_rate > 0.0 && d.total_rate.is_finite(), "demand.total_rate", || {
            format!("must be positive, got {}", d.total_rate)
        })?;
        check((0.0..=1.0).contains(&d.ev_fraction), "demand.ev_fraction", || {
            format!("must lie in [0, 1], got {}", d.ev_fraction)
        })?;
        check(
            0.0 <= d.soc_init_low && d.soc_init_low < d.soc_init_high && d.soc_init_high <= d.soc_target && d.soc_target <= 1.0,
            "demand.soc_init_low",
            || "need 0 <= soc_init_low < soc_init_high <= soc_target <= 1".into(),
        )?;
        if let OdMode::Table { pairs } = &d.od {
            check(!pairs.is_empty(), "demand.od.pairs", || "table is empty".into())?;
            for p in pairs {
                check(p.weight >= 0.0 && p.weight.is_finite(), "demand.od.pairs.weight", || {
                    format!("negative weight for {} -> {}", p.origin, p.destination)
                })?;
                check(p.origin != p.destination, "demand.od.pairs", || {
                    format!("origin equals destination ({})", p.origin)
                })?;
            }
            check(pairs.iter().any(|p| p.weight > 0.0), "demand.od.pairs.weight", || "all weights are zero".into())?;
        }
        check(!self.stations.is_empty(), "charging_station", || "at least one station is required".into())?;
        for (i, s) in self.stations.iter().enumerate() {
            check(s.piles >= 1, "charging_station.piles", || format!("station {} has no piles", s.id))?;
            check(
                self.stations[..i].iter().all(|o| o.id != s.id),
                "charging_station.id",
                || format!("duplicate station id {}", s.id),
            )?;
        }
        let dr = &self.droop;
        check(0.0 < dr.v_ref1 && dr.v_ref1 < dr.v_ref2, "droop.v_ref1", || "need 0 < v_ref1 < v_ref2".into())?;
        check(dr.p_max_kw > 0.0, "droop.p_max_kw", || "must be positive".into())?;
        check(0.0 < dr.delta_min_frac && dr.delta_min_frac <= 1.0, "droop.delta_min_frac", || {
            "must lie in (0, 1]".into()
        })?;
        let b = &self.battery;
        check(b.capacity_kwh > 0.0, "battery.capacity_kwh", || "must be positive".into())?;
        check(0.0 < b.eta && b.eta <= 1.0, "battery.eta", || "must lie in (0, 1]".into())?;
        check(b.rho_kwh_per_km >= 0.0, "battery.rho_kwh_per_km", || "must be non-negative".into())?;
        let r = &self.reward;
        check(r.w1 > 0.0, "reward.w1", || "must be positive".into())?;
        check(0.0 < r.w2 && r.w2 < 1.0, "reward.w2", || "must lie in (0, 1)".into())?;
        let t = &self.srl;
        for (name, v) in [
            ("srl.epochs", t.epochs),
            ("srl.episodes_per_epoch", t.episodes_per_epoch),
            ("srl.batch_size", t.batch_size),
            ("srl.update_iters", t.update_iters),
            ("srl.hidden", t.hidden),
            ("srl.hidden_layers", t.hidden_layers),
        ] {
            check(v > 0, name, || "must be positive".into())?;
        }
        for (name, v) in [
            ("srl.actor_lr", t.actor_lr),
            ("srl.critic_lr", t.critic_lr),
            ("srl.lambda_lr", t.lambda_lr),
            ("srl.clip_eps", t.clip_eps),
            ("srl.max_grad_norm", t.max_grad_norm),
        ] {
            check(v > 0.0 && v.is_finite(), name, || "must be positive".into())?;
        }
        check(0.0 < t.gamma && t.gamma <= 1.0, "srl.gamma", || "must lie in (0, 1]".into())?;
        check((0.0..=1.0).contains(&t.gae_lambda), "srl.gae_lambda", || "must lie in [0, 1]".into())?;
        check(t.entropy_coef >= 0.0, "srl.entropy_coef", || "must be non-negative".into())?;
        check(t.lambda_init >= 0.0, "srl.lambda_init", || "must be non-negative".into())?;
        check(!t.seeds.is_empty(), "srl.seeds", || "at least one seed is required".into())?;
        let p = &self.predictor;
        for (name, v) in [
            ("predictor.encoder_len", p.encoder_len),
            ("predictor.decoder_len", p.decoder_len),
            ("predictor.hidden", p.hidden),
            ("predictor.layers", p.layers),
            ("predictor.batch_size", p.batch_size),
            ("predictor.train_iters", p.train_iters),
            ("predictor.train_every", p.train_every),
            ("predictor.converge_window", p.converge_window),
        ] {
            check(v > 0, name, || "must be positive".into())?;
        }
        check(
            p.sample_interval_s > 0 && p.step_interval_s % p.sample_interval_s == 0,
            "predictor.sample_interval_s",
            || "must be positive and divide step_interval_s".into(),
        )?;
        check((0.0..1.0).contains(&p.dropout), "predictor.dropout", || "must lie in [0, 1)".into())?;
        check(p.lr > 0.0, "predictor.lr", || "must be positive".into())?;
        check(0.0 < p.smoothing && p.smoothing <= 1.0, "predictor.smoothing", || "must lie in (0, 1]".into())?;
        Ok(())
    }

    pub fn horizon_s(&self) -> u64 {
        self.warmup_s + self.control_s
    }
}
