//! Synthetic periodic-demand workload for the forecaster.

use chargerec::predictor::DemandPredictor;
use chargerec::scenario::PredictorConfig;

pub const STATIONS: usize = 2;
pub const PERIOD: usize = 12;

/// Demand of every station at slow step `t`, in `[0.1, 0.9]`.
pub fn demand(t: usize) -> Vec<f64> {
    (0..STATIONS)
        .map(|m| 0.5 + 0.4 * (std::f64::consts::TAU * t as f64 / PERIOD as f64 + m as f64).sin())
        .collect()
}

/// Station features: the current demand tiled over the nine feature slots.
pub fn features(t: usize) -> Vec<f64> {
    let d = demand(t);
    (0..9 * STATIONS).map(|k| d[k % STATIONS]).collect()
}

pub fn config() -> PredictorConfig {
    PredictorConfig {
        hidden: 24,
        layers: 1,
        dropout: 0.0,
        lr: 5e-3,
        batch_size: 32,
        train_iters: 20,
        min_pairs: 32,
        train_every: 8,
        ..PredictorConfig::default()
    }
}

pub struct Outcome {
    pub predictor: DemandPredictor,
    /// Forecast MSE over held-out windows after learning stopped.
    pub mse: f64,
    /// Variance of the demand series, the error of predicting its mean.
    pub baseline: f64,
    pub train_samples: usize,
}

/// Streams the periodic series until the forecaster reports convergence or
/// `max_samples` is hit, then scores forecasts on the continuation.
pub fn run(seed: u64, max_samples: usize) -> Outcome {
    let mut p = DemandPredictor::new(&config(), &[1; STATIONS], seed);
    p.start_episode();
    let mut t = 0;
    while t < max_samples && !p.is_converged() {
        p.observe(&features(t), &demand(t)).unwrap();
        t += 1;
    }
    let train_samples = t;
    p.set_learning(false);
    let ld = p.config().decoder_len;
    let (mut se, mut n) = (0.0, 0usize);
    for _ in 0..4 * PERIOD {
        p.observe(&features(t), &demand(t)).unwrap();
        let forecast = p.forecast().unwrap();
        for (k, row) in forecast.iter().enumerate().take(ld) {
            for (y, d) in row.iter().zip(demand(t + 1 + k)) {
                se += (y - d).powi(2);
                n += 1;
            }
        }
        t += 1;
    }
    let all: Vec<f64> = (0..PERIOD).flat_map(demand).collect();
    let mean = all.iter().sum::<f64>() / all.len() as f64;
    let baseline = all.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / all.len() as f64;
    Outcome {
        predictor: p,
        mse: se / n as f64,
        baseline,
        train_samples,
    }
}

/// True when each of the first `k` smoothed losses is below its predecessor.
pub fn smoothed_decreasing(p: &DemandPredictor, k: usize) -> bool {
    let s = p.smoothed_losses();
    s.len() >= k && s[..k].windows(2).all(|w| w[1] < w[0])
}
