//! Reference advantage estimator and toy environments for agent tests.

use chargerec::env::{Environment, Step};
use chargerec::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `A_t = sum_{l=0}^{T-t-1} (gamma eta)^l (s_{t+l} + gamma V_{t+l+1} - V_{t+l})`
/// evaluated term by term.
pub fn gae_brute_force(signal: &[f64], values: &[f64], gamma: f64, eta: f64) -> Vec<f64> {
    let n = signal.len();
    (0..n)
        .map(|t| {
            (0..n - t)
                .map(|l| {
                    let k = t + l;
                    (gamma * eta).powi(l as i32) * (signal[k] + gamma * values[k + 1] - values[k])
                })
                .sum()
        })
        .collect()
}

/// Fixed-length episodes where every step costs `cost` and pays `reward`,
/// whatever the action.
pub struct ConstCostEnv {
    pub len: usize,
    pub cost: f64,
    pub reward: f64,
    pub actions: usize,
    t: usize,
}

impl ConstCostEnv {
    pub fn new(len: usize, cost: f64, reward: f64, actions: usize) -> Self {
        ConstCostEnv {
            len,
            cost,
            reward,
            actions,
            t: 0,
        }
    }

    fn obs(&self) -> Vec<f64> {
        vec![self.t as f64 / self.len as f64, 1.0, -0.5]
    }
}

impl Environment for ConstCostEnv {
    fn observation_dim(&self) -> usize {
        3
    }

    fn num_actions(&self) -> usize {
        self.actions
    }

    fn reset(&mut self, _seed: u64) -> Result<Vec<f64>> {
        self.t = 0;
        Ok(self.obs())
    }

    fn step(&mut self, _action: usize) -> Result<Step> {
        self.t += 1;
        let done = self.t == self.len;
        Ok(Step {
            observation: if done { vec![0.0; 3] } else { self.obs() },
            reward: self.reward,
            cost: self.cost,
            done,
        })
    }
}

/// Contextual bandit over two states: action `a` pays 1 in state `a` and 0
/// otherwise. States are drawn from the reset seed.
pub struct TwoStateBandit {
    pub len: usize,
    t: usize,
    state: usize,
    rng: ChaCha8Rng,
}

impl TwoStateBandit {
    pub fn new(len: usize) -> Self {
        TwoStateBandit {
            len,
            t: 0,
            state: 0,
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }

    fn obs(&self) -> Vec<f64> {
        let mut o = vec![0.0; 2];
        o[self.state] = 1.0;
        o
    }
}

impl Environment for TwoStateBandit {
    fn observation_dim(&self) -> usize {
        2
    }

    fn num_actions(&self) -> usize {
        2
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.t = 0;
        self.state = self.rng.gen_range(0..2);
        Ok(self.obs())
    }

    fn step(&mut self, action: usize) -> Result<Step> {
        let reward = if action == self.state { 1.0 } else { 0.0 };
        self.t += 1;
        self.state = self.rng.gen_range(0..2);
        let done = self.t == self.len;
        Ok(Step {
            observation: if done { vec![0.0; 2] } else { self.obs() },
            reward,
            cost: 0.0,
            done,
        })
    }
}
