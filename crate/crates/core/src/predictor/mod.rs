//! Online Seq2Seq forecaster of per-station charging demand and the
//! environment wrapper that appends its forecast to the observation.

mod model;

use std::collections::VecDeque;
use std::time::{Duration, Instant};

use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;

pub use model::{Seq2Seq, SeqPair};

use crate::env::{ChargingEnv, EpisodeMetrics, Environment, Step};
use crate::error::{Error, Result};
use crate::nn::{scale_all, Adam, Tensor};
use crate::rng::stream_rng;
use crate::scenario::PredictorConfig;

const STREAM_PREDICTOR_INIT: u64 = 31;
const STREAM_PREDICTOR_TRAIN: u64 = 32;
const BUFFER_CAPACITY: usize = 20_000;

/// Per-station mean of the occupancy samples in one window. `samples[i][m]`
/// is the queued-plus-charging count of station `m` at the `i`-th instant.
pub fn average_demand(samples: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = samples
        .first()
        .ok_or_else(|| Error::InsufficientData("demand window has no sampled instant".into()))?;
    let mut out = vec![0.0; first.len()];
    for s in samples {
        if s.len() != out.len() {
            return Err(Error::Shape {
                context: "occupancy sample",
                expected: out.len().to_string(),
                got: s.len().to_string(),
            });
        }
        out.iter_mut().zip(s).for_each(|(o, x)| *o += x);
    }
    let n = samples.len() as f64;
    out.iter_mut().for_each(|o| *o /= n);
    Ok(out)
}

/// Exponentially smoothed copy of `losses`; `smoothing` is the weight of the
/// newest value.
pub fn smooth_losses(losses: &[f64], smoothing: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(losses.len());
    let mut acc = None;
    for &l in losses {
        let s = match acc {
            None => l,
            Some(prev) => smoothing * l + (1.0 - smoothing) * prev,
        };
        acc = Some(s);
        out.push(s);
    }
    out
}

/// True once the smoothed loss moved by less than `tol` (relative) across
/// the last `window` train steps. Shorter histories never converge.
pub fn convergence_check(losses: &[f64], window: usize, tol: f64, smoothing: f64) -> bool {
    if window == 0 || losses.len() < window.max(2) {
        return false;
    }
    let s = smooth_losses(losses, smoothing);
    let last = s[s.len() - 1];
    let first = s[s.len() - window.max(2)];
    let rel = (last - first).abs() / first.abs().max(1e-12);
    rel < tol
}

/// Writes predictions clipped at zero into the forecast slot at the end of
/// `state`.
pub fn augment(state: &mut [f64], prediction: &[Vec<f64>], decoder_len: usize, stations: usize) -> Result<()> {
    let width = decoder_len * stations;
    if prediction.len() != decoder_len || prediction.iter().any(|p| p.len() != stations) {
        return Err(Error::Shape {
            context: "demand forecast",
            expected: format!("{decoder_len} x {stations}"),
            got: format!("{} rows", prediction.len()),
        });
    }
    if state.len() < width {
        return Err(Error::Shape {
            context: "observation forecast slot",
            expected: format!(">= {width}"),
            got: state.len().to_string(),
        });
    }
    let start = state.len() - width;
    for (dst, v) in state[start..].iter_mut().zip(prediction.iter().flatten()) {
        *dst = v.max(0.0);
    }
    Ok(())
}

/// Slow-timescale history of one episode plus the training pairs assembled
/// from it.
#[derive(Clone, Debug)]
pub struct PredictorBuffer {
    encoder_len: usize,
    decoder_len: usize,
    features: Vec<Vec<f64>>,
    demand: Vec<Vec<f64>>,
    pairs: VecDeque<SeqPair<f64>>,
    capacity: usize,
    total_pairs: usize,
}

impl PredictorBuffer {
    pub fn new(encoder_len: usize, decoder_len: usize) -> Self {
        Self::with_capacity(encoder_len, decoder_len, BUFFER_CAPACITY)
    }

    pub fn with_capacity(encoder_len: usize, decoder_len: usize, capacity: usize) -> Self {
        assert!(encoder_len >= 1 && decoder_len >= 1 && capacity >= 1);
        PredictorBuffer {
            encoder_len,
            decoder_len,
            features: Vec::new(),
            demand: Vec::new(),
            pairs: VecDeque::new(),
            capacity,
            total_pairs: 0,
        }
    }

    /// Drops the per-episode history; assembled pairs are kept.
    pub fn start_episode(&mut self) {
        self.features.clear();
        self.demand.clear();
    }

    /// Appends the sample of slow step `t_p` (its index in the episode) and
    /// returns whether a new training pair was formed.
    pub fn push(&mut self, features: Vec<f64>, demand: Vec<f64>) -> bool {
        self.features.push(features);
        self.demand.push(demand);
        let t_p = self.features.len() - 1;
        let (le, ld) = (self.encoder_len, self.decoder_len);
        if t_p < ld + le - 1 {
            return false;
        }
        let last_input = t_p - ld;
        let pair = SeqPair {
            inputs: self.features[last_input + 1 - le..=last_input].to_vec(),
            last: self.demand[last_input].clone(),
            targets: self.demand[last_input + 1..=t_p].to_vec(),
        };
        if self.pairs.len() == self.capacity {
            self.pairs.pop_front();
        }
        self.pairs.push_back(pair);
        self.total_pairs += 1;
        true
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Number of pairs ever formed, including evicted ones.
    pub fn total_pairs(&self) -> usize {
        self.total_pairs
    }

    pub fn pairs(&self) -> impl Iterator<Item = &SeqPair<f64>> {
        self.pairs.iter()
    }

    pub fn episode_len(&self) -> usize {
        self.features.len()
    }

    /// Encoder input for a forecast made now: the last `L_e` feature
    /// snapshots, zero-padded at the front, and the latest demand.
    pub fn current_window(&self, feature_dim: usize, stations: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
        let le = self.encoder_len;
        let have = self.features.len().min(le);
        let mut inputs = vec![vec![0.0; feature_dim]; le - have];
        inputs.extend(self.features[self.features.len() - have..].iter().cloned());
        let last = self.demand.last().cloned().unwrap_or_else(|| vec![0.0; stations]);
        (inputs, last)
    }
}

/// Forecaster state carried across episodes: model, optimizer, buffer and
/// loss history.
#[derive(Clone, Debug)]
pub struct DemandPredictor {
    cfg: PredictorConfig,
    model: Seq2Seq<f64>,
    opt: Adam<f64>,
    buffer: PredictorBuffer,
    piles: Vec<f64>,
    losses: Vec<f64>,
    converged: bool,
    learning: bool,
    rng: ChaCha8Rng,
}

impl DemandPredictor {
    /// `piles[m]` normalises the demand of station `m`.
    pub fn new(cfg: &PredictorConfig, piles: &[usize], seed: u64) -> Self {
        let m = piles.len();
        let mut init = stream_rng(seed, STREAM_PREDICTOR_INIT);
        let model = Seq2Seq::new(9 * m, m, cfg.hidden, cfg.layers, cfg.dropout, cfg.decoder_len, &mut init);
        DemandPredictor {
            cfg: cfg.clone(),
            model,
            opt: Adam::new(cfg.lr),
            buffer: PredictorBuffer::new(cfg.encoder_len, cfg.decoder_len),
            piles: piles.iter().map(|&p| p.max(1) as f64).collect(),
            losses: Vec::new(),
            converged: false,
            learning: true,
            rng: stream_rng(seed, STREAM_PREDICTOR_TRAIN),
        }
    }

    pub fn config(&self) -> &PredictorConfig {
        &self.cfg
    }

    pub fn model(&self) -> &Seq2Seq<f64> {
        &self.model
    }

    pub fn model_mut(&mut self) -> &mut Seq2Seq<f64> {
        &mut self.model
    }

    pub fn buffer(&self) -> &PredictorBuffer {
        &self.buffer
    }

    /// Mean batch loss of every train step so far.
    pub fn losses(&self) -> &[f64] {
        &self.losses
    }

    pub fn smoothed_losses(&self) -> Vec<f64> {
        smooth_losses(&self.losses, self.cfg.smoothing)
    }

    pub fn is_converged(&self) -> bool {
        self.converged
    }

    /// Stops pair collection and training, e.g. for evaluation runs.
    pub fn set_learning(&mut self, on: bool) {
        self.learning = on;
    }

    pub fn start_episode(&mut self) {
        self.buffer.start_episode();
    }

    /// Parameters for a checkpoint, prefixed with `predictor.`.
    pub fn params(&self) -> Vec<Tensor<f64>> {
        self.model
            .params()
            .into_iter()
            .map(|t| {
                let name = format!("predictor.{}", t.name());
                t.with_name(name)
            })
            .collect()
    }

    /// Loads the `predictor.*` tensors of a checkpoint.
    pub fn load_params(&mut self, params: &[Tensor<f64>]) -> Result<()> {
        let mine: Vec<Tensor<f64>> = params
            .iter()
            .filter(|t| t.name().starts_with("predictor."))
            .cloned()
            .collect();
        self.model.set_params(&mine)
    }

    fn normalize(&self, demand: &[f64]) -> Vec<f64> {
        demand.iter().zip(&self.piles).map(|(d, p)| d / p).collect()
    }

    /// Records one slow sample. Until convergence this forms pairs and
    /// trains whenever the trigger fires; returns the loss if it trained.
    pub fn observe(&mut self, features: &[f64], demand: &[f64]) -> Result<Option<f64>> {
        let demand = self.normalize(demand);
        if self.converged || !self.learning {
            // History still feeds forecasts, but no new pairs are formed.
            self.buffer.features.push(features.to_vec());
            self.buffer.demand.push(demand);
            return Ok(None);
        }
        if !self.buffer.push(features.to_vec(), demand) {
            return Ok(None);
        }
        let n = self.buffer.total_pairs();
        if n >= self.cfg.min_pairs && n % self.cfg.train_every.max(1) == 0 {
            let loss = self.train_step()?;
            self.losses.push(loss);
            self.converged = convergence_check(
                &self.losses,
                self.cfg.converge_window,
                self.cfg.converge_tol,
                self.cfg.smoothing,
            );
            return Ok(Some(loss));
        }
        Ok(None)
    }

    /// `train_iters` Adam updates on random mini-batches; returns the mean
    /// batch loss.
    pub fn train_step(&mut self) -> Result<f64> {
        let n = self.buffer.len();
        if n < self.cfg.min_pairs.max(1) {
            return Err(Error::InsufficientData(format!(
                "predictor buffer holds {n} pairs, needs {}",
                self.cfg.min_pairs.max(1)
            )));
        }
        let batch = self.cfg.batch_size.clamp(1, n);
        let mut total = 0.0;
        for _ in 0..self.cfg.train_iters.max(1) {
            let idx = sample(&mut self.rng, n, batch);
            let mut grads = self.model.zero_grads();
            let mut loss = 0.0;
            for i in idx.iter() {
                loss += self
                    .model
                    .loss_and_grad(&self.buffer.pairs[i], &mut grads, 1.0, Some(&mut self.rng))?;
            }
            scale_all(&mut grads, 1.0 / batch as f64);
            self.model.apply_gradients(&mut self.opt, &mut grads)?;
            total += loss / batch as f64;
        }
        let mean = total / self.cfg.train_iters.max(1) as f64;
        if !mean.is_finite() {
            return Err(Error::NonFinite {
                block: "predictor loss".into(),
            });
        }
        Ok(mean)
    }

    /// Forecast of pile-normalised demand, `L_d x stations`.
    pub fn forecast(&self) -> Result<Vec<Vec<f64>>> {
        let (inputs, last) = self.buffer.current_window(self.model.input_dim(), self.piles.len());
        self.model.predict(&inputs, &last)
    }
}

/// Charging environment whose observation tail carries the demand forecast.
/// Without a predictor the tail stays zero and the wrapper is transparent.
#[derive(Clone, Debug)]
pub struct AugmentedEnv {
    env: ChargingEnv,
    predictor: Option<DemandPredictor>,
    consumed: usize,
    forecast_time: Duration,
}

impl AugmentedEnv {
    pub fn new(env: ChargingEnv, predictor: Option<DemandPredictor>) -> Self {
        AugmentedEnv {
            env,
            predictor,
            consumed: 0,
            forecast_time: Duration::ZERO,
        }
    }

    /// Wrapper with a fresh predictor seeded from `seed`.
    pub fn with_predictor(env: ChargingEnv, seed: u64) -> Self {
        let sc = env.scenario();
        let piles: Vec<usize> = sc.stations.iter().map(|s| s.piles).collect();
        let predictor = DemandPredictor::new(&sc.config.predictor, &piles, seed);
        Self::new(env, Some(predictor))
    }

    pub fn inner(&self) -> &ChargingEnv {
        &self.env
    }

    pub fn inner_mut(&mut self) -> &mut ChargingEnv {
        &mut self.env
    }

    pub fn predictor(&self) -> Option<&DemandPredictor> {
        self.predictor.as_ref()
    }

    pub fn predictor_mut(&mut self) -> Option<&mut DemandPredictor> {
        self.predictor.as_mut()
    }

    fn ingest(&mut self) -> Result<()> {
        let (Some(pred), Some(sim)) = (self.predictor.as_mut(), self.env.sim()) else {
            return Ok(());
        };
        for s in &sim.slow_samples()[self.consumed..] {
            pred.observe(&s.features, &s.demand)?;
        }
        self.consumed = sim.slow_samples().len();
        Ok(())
    }

    /// Wall-clock time spent in forecasts since the last reset.
    pub fn forecast_time(&self) -> Duration {
        self.forecast_time
    }

    fn fill(&mut self, obs: &mut [f64]) -> Result<()> {
        if let Some(pred) = &self.predictor {
            let start = Instant::now();
            let forecast = pred.forecast()?;
            augment(obs, &forecast, pred.cfg.decoder_len, self.env.num_stations())?;
            self.forecast_time += start.elapsed();
        }
        Ok(())
    }
}

impl Environment for AugmentedEnv {
    fn observation_dim(&self) -> usize {
        self.env.observation_dim()
    }

    fn num_actions(&self) -> usize {
        self.env.num_actions()
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        self.consumed = 0;
        self.forecast_time = Duration::ZERO;
        if let Some(p) = self.predictor.as_mut() {
            p.start_episode();
        }
        let mut obs = self.env.reset(seed)?;
        self.ingest()?;
        self.fill(&mut obs)?;
        Ok(obs)
    }

    fn step(&mut self, action: usize) -> Result<Step> {
        let mut step = self.env.step(action)?;
        self.ingest()?;
        if !step.done {
            self.fill(&mut step.observation)?;
        }
        Ok(step)
    }

    fn greedy_action(&self) -> Option<usize> {
        self.env.greedy_action()
    }

    fn completed_metrics(&self) -> Option<EpisodeMetrics> {
        self.env.completed_metrics()
    }
}
