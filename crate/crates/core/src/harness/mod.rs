//! Experiment plumbing: train / evaluate / sweep runs over seeds, metric
//! records, traces and plot-ready CSV reports.

mod files;
mod report;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use files::{read_metrics, MetricsRow};
pub use report::{percentile, report, ReportSummary};

use crate::env::Environment;
use crate::error::{Error, Result};
use crate::nn::{load_tensors, save_tensors};
use crate::predictor::DemandPredictor;
use crate::scenario::{to_toml, Scenario, ScenarioConfig};
use crate::srl::{evaluate, make_env, train_method_with, Agent, Method};

/// What a run does per seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Train, save a checkpoint, then evaluate.
    Train,
    /// Evaluate a saved checkpoint (or the rule-based policy).
    Eval,
    /// One train run per value of a scenario parameter.
    Sweep,
}

/// Scenario parameter varied by a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    EvFraction,
    /// Values in minutes.
    ControllerInterval,
    DecoderLength,
    ComplianceRate,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::EvFraction => "ev_fraction",
            SweepAxis::ControllerInterval => "controller_interval",
            SweepAxis::DecoderLength => "decoder_length",
            SweepAxis::ComplianceRate => "compliance_rate",
        }
    }

    /// Applies `value` to a copy of the scenario and the compliance rate and
    /// validates the result.
    pub fn apply(self, cfg: &mut ScenarioConfig, compliance: &mut f64, value: f64) -> Result<()> {
        let whole = |what: &str| -> Result<u64> {
            if value.fract() != 0.0 || value < 1.0 {
                return Err(Error::invalid(what, format!("needs a positive integer, got {value}")));
            }
            Ok(value as u64)
        };
        match self {
            SweepAxis::EvFraction => cfg.demand.ev_fraction = value,
            SweepAxis::ControllerInterval => {
                let secs = value * 60.0;
                if secs.fract() != 0.0 || secs < 1.0 {
                    return Err(Error::invalid(
                        "controller_interval",
                        format!("{value} min is not a whole number of seconds"),
                    ));
                }
                cfg.controller_interval_s = secs as u64;
            }
            SweepAxis::DecoderLength => cfg.predictor.decoder_len = whole("decoder_length")? as usize,
            SweepAxis::ComplianceRate => {
                if !(0.0..=1.0).contains(&value) {
                    return Err(Error::invalid("compliance_rate", format!("must lie in [0, 1], got {value}")));
                }
                *compliance = value;
            }
        }
        cfg.validate()
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            SweepAxis::EvFraction,
            SweepAxis::ControllerInterval,
            SweepAxis::DecoderLength,
            SweepAxis::ComplianceRate,
        ]
        .into_iter()
        .find(|a| a.as_str() == s.replace('-', "_"))
        .ok_or_else(|| {
            Error::invalid(
                "sweep-axis",
                format!("unknown axis {s:?}; expected ev_fraction, controller_interval, decoder_length or compliance_rate"),
            )
        })
    }
}

/// Full description of one harness invocation.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub scenario: PathBuf,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    pub mode: Mode,
    pub sweep: Option<(SweepAxis, Vec<f64>)>,
    pub out: PathBuf,
    pub compliance: f64,
    /// Write per-step and per-event traces.
    pub trace: bool,
    /// Training output root or one method's run directory holding the
    /// checkpoints for [`Mode::Eval`].
    pub checkpoints: Option<PathBuf>,
    /// Overrides the scenario's epoch count.
    pub epochs: Option<usize>,
}

impl ExperimentSpec {
    pub fn new(scenario: impl Into<PathBuf>, method: Method, mode: Mode, out: impl Into<PathBuf>) -> Self {
        ExperimentSpec {
            scenario: scenario.into(),
            methods: vec![method],
            seeds: vec![0, 1, 2, 3, 4],
            mode,
            sweep: None,
            out: out.into(),
            compliance: 1.0,
            trace: false,
            checkpoints: None,
            epochs: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::invalid("method", "no method given"));
        }
        if self.seeds.is_empty() {
            return Err(Error::invalid("seeds", "no seed given"));
        }
        if !(0.0..=1.0).contains(&self.compliance) {
            return Err(Error::invalid("compliance", format!("must lie in [0, 1], got {}", self.compliance)));
        }
        match (self.mode, &self.sweep) {
            (Mode::Sweep, None) => Err(Error::invalid("sweep-axis", "sweep mode needs an axis and values")),
            (Mode::Sweep, Some((_, v))) if v.is_empty() => Err(Error::invalid("sweep-values", "no values given")),
            (Mode::Train | Mode::Eval, Some(_)) => {
                Err(Error::invalid("sweep-axis", "only valid in sweep mode"))
            }
            _ => Ok(()),
        }
    }
}

/// Evaluation result of one method and seed.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRecord {
    pub method: Method,
    pub seed: u64,
    pub ttt_s: f64,
    pub cvv: f64,
    /// Mean waiting plus charging time, minutes per EV.
    pub wct_min: f64,
    /// Wall-clock seconds of the run (training plus evaluation).
    pub et_s: f64,
    /// Mean wall-clock seconds per decision.
    pub dt_s: f64,
    pub num_vehicles: usize,
    pub num_ev: usize,
    pub steps: usize,
    pub stranded: usize,
}

/// Hex SHA-256 of the canonical TOML rendering of a scenario config.
pub fn config_hash(cfg: &ScenarioConfig) -> Result<String> {
    let text = to_toml(cfg)?;
    Ok(format!("{:x}", Sha256::digest(text.as_bytes())))
}

/// Identifies the code that produced a run.
pub fn build_id() -> String {
    format!(
        "chargerec {} ({})",
        env!("CARGO_PKG_VERSION"),
        if cfg!(debug_assertions) { "debug" } else { "release" }
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub method: String,
    pub mode: Mode,
    pub seeds: Vec<u64>,
    pub scenario: String,
    pub config_hash: String,
    pub build_id: String,
    pub compliance: f64,
    pub epochs: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep_axis: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep_value: Option<f64>,
}

pub fn checkpoint_path(run_dir: &Path, method: Method, seed: u64) -> PathBuf {
    run_dir.join("checkpoints").join(format!("{method}_seed{seed}.ckpt"))
}

/// Saves the agent and, if present, the predictor in one checkpoint file.
pub fn save_checkpoint(path: &Path, agent: &dyn Agent, predictor: Option<&DemandPredictor>) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tensors = agent.params();
    if let Some(p) = predictor {
        tensors.extend(p.params());
    }
    save_tensors(path, &tensors)
}

/// Rebuilds the agent (and predictor) of `method` for `sc` from a checkpoint.
pub fn load_checkpoint(
    path: &Path,
    method: Method,
    sc: &Arc<Scenario>,
    seed: u64,
) -> Result<(Box<dyn Agent>, Option<DemandPredictor>)> {
    let tensors = load_tensors(path)?;
    let env = make_env(method, sc, seed, 1.0)?;
    let mut agent = method
        .build_agent(env.observation_dim(), env.num_actions(), &sc.config.srl, seed)
        .ok_or_else(|| Error::Checkpoint(format!("method {method} has no learned parameters")))?;
    agent.load_params(&tensors)?;
    let predictor = match env.predictor() {
        Some(p) => {
            let mut p = p.clone();
            p.load_params(&tensors)?;
            Some(p)
        }
        None => None,
    };
    Ok((agent, predictor))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Runs one method over all seeds in `dir` and returns its records.
fn run_method(
    spec: &ExperimentSpec,
    method: Method,
    sc: &Arc<Scenario>,
    compliance: f64,
    dir: &Path,
    sweep: Option<(SweepAxis, f64)>,
) -> Result<Vec<MetricsRecord>> {
    create_dir(dir)?;
    let mut train_cfg = sc.config.srl.clone();
    if let Some(e) = spec.epochs {
        train_cfg.epochs = e;
    }
    let mode = if spec.mode == Mode::Eval { Mode::Eval } else { Mode::Train };
    let manifest = Manifest {
        method: method.to_string(),
        mode,
        seeds: spec.seeds.clone(),
        scenario: sc.config.name.clone(),
        config_hash: config_hash(&sc.config)?,
        build_id: build_id(),
        compliance,
        epochs: train_cfg.epochs,
        sweep_axis: sweep.map(|(a, _)| a.to_string()),
        sweep_value: sweep.map(|(_, v)| v),
    };
    files::write_text(&dir.join("manifest.toml"), &toml::to_string(&manifest).map_err(|e| Error::invalid("manifest", e.to_string()))?)?;
    files::write_text(&dir.join("scenario.toml"), &to_toml(&sc.config)?)?;

    let mut records = Vec::with_capacity(spec.seeds.len());
    for &seed in &spec.seeds {
        let ctx = |e: Error| e.context(format!("method {method}, seed {seed}"));
        let start = Instant::now();
        let (mut agent, predictor): (Option<Box<dyn Agent>>, _) = match mode {
            Mode::Train => {
                let out = train_method_with(method, sc, &train_cfg, seed, compliance).map_err(ctx)?;
                if !out.curve.is_empty() {
                    files::write_curve(&dir.join("curves").join(format!("seed{seed}.csv")), &out.curve)?;
                }
                if let Some(p) = &out.predictor {
                    files::write_losses(&dir.join("predictor").join(format!("seed{seed}.csv")), p)?;
                }
                if let Some(a) = &out.agent {
                    save_checkpoint(&checkpoint_path(dir, method, seed), a.as_ref(), out.predictor.as_ref())?;
                }
                (out.agent, out.predictor)
            }
            _ if method == Method::Greedy => (None, None),
            _ => {
                let from = spec
                    .checkpoints
                    .as_deref()
                    .ok_or_else(|| Error::invalid("checkpoint", format!("eval of {method} needs a checkpoint directory")))?;
                // Either a training output root or one method's run directory.
                let method_dir = from.join(method.as_str());
                let path = if method_dir.is_dir() {
                    checkpoint_path(&method_dir, method, seed)
                } else {
                    checkpoint_path(from, method, seed)
                };
                let (a, p) = load_checkpoint(&path, method, sc, seed).map_err(ctx)?;
                (Some(a), p)
            }
        };
        let eval = evaluate(method, agent.as_mut().map(|a| &mut **a as &mut dyn Agent), predictor, sc, seed, compliance, spec.trace).map_err(ctx)?;
        let m = &eval.metrics;
        records.push(MetricsRecord {
            method,
            seed,
            ttt_s: m.ttt_s as f64,
            cvv: m.cvv,
            wct_min: m.wct_s / 60.0,
            et_s: start.elapsed().as_secs_f64(),
            dt_s: eval.decision_s,
            num_vehicles: m.num_vehicles,
            num_ev: m.num_ev,
            steps: m.steps,
            stranded: m.stranded,
        });
        files::write_traces(&dir.join("traces"), seed, &eval, spec.trace)?;
    }
    files::write_metrics(&dir.join("metrics.csv"), &records)?;
    files::write_timing(&dir.join("timing.csv"), &records)?;
    files::write_summary(&dir.join("summary.csv"), &records)?;
    Ok(records)
}

/// Executes a train or eval spec; each method gets its own directory under
/// `spec.out` and `summary.csv` there has one row per method.
pub fn run(spec: &ExperimentSpec) -> Result<Vec<MetricsRecord>> {
    spec.validate()?;
    if spec.mode == Mode::Sweep {
        return sweep(spec);
    }
    let sc = Arc::new(Scenario::load(&spec.scenario)?);
    let mut all = Vec::new();
    for &method in &spec.methods {
        all.extend(run_method(spec, method, &sc, spec.compliance, &spec.out.join(method.as_str()), None)?);
    }
    files::write_summary(&spec.out.join("summary.csv"), &all)?;
    Ok(all)
}

/// One full train run per sweep value and seed; writes `sweep.csv` keyed by
/// (value, method, seed) and `sweep_summary.csv` with one row per value and
/// method.
pub fn sweep(spec: &ExperimentSpec) -> Result<Vec<MetricsRecord>> {
    spec.validate()?;
    let (axis, values) = spec
        .sweep
        .clone()
        .ok_or_else(|| Error::invalid("sweep-axis", "sweep mode needs an axis and values"))?;
    let base = Scenario::load(&spec.scenario)?.config;
    let mut rows = Vec::new();
    for &value in &values {
        let mut cfg = base.clone();
        let mut compliance = spec.compliance;
        axis.apply(&mut cfg, &mut compliance, value)
            .map_err(|e| e.context(format!("{axis} = {value}")))?;
        let sc = Arc::new(Scenario::from_config(cfg)?);
        let value_dir = spec.out.join(format!("{axis}={value}"));
        for &method in &spec.methods {
            let recs = run_method(spec, method, &sc, compliance, &value_dir.join(method.as_str()), Some((axis, value)))
                .map_err(|e| e.context(format!("{axis} = {value}")))?;
            rows.extend(recs.into_iter().map(|r| (value, r)));
        }
    }
    files::write_sweep(&spec.out, axis, &rows)?;
    Ok(rows.into_iter().map(|(_, r)| r).collect())
}
