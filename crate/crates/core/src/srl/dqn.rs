use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::agent::{check_action_count, layer_sizes, minibatch, Agent, Decision, Episode, Net, Transition, UpdateStats};
use crate::error::{Error, Result};
use crate::nn::{zeros_like, Tensor};
use crate::scenario::TrainConfig;

#[derive(Clone, Debug)]
struct Experience {
    obs: Vec<f64>,
    action: usize,
    reward: f64,
    next_obs: Vec<f64>,
    done: bool,
}

/// Deep Q-learning with experience replay, a periodically synced target
/// network and linearly annealed epsilon-greedy exploration.
#[derive(Clone, Debug)]
pub struct DqnAgent {
    cfg: TrainConfig,
    q: Net,
    target: Net,
    replay: VecDeque<Experience>,
    explore_steps: usize,
    updates: usize,
    last_loss: f64,
    num_actions: usize,
    rng: ChaCha8Rng,
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

impl DqnAgent {
    pub fn new(obs_dim: usize, num_actions: usize, cfg: &TrainConfig, seed: u64) -> Self {
        let mut init = crate::stream_rng(seed, super::STREAM_AGENT_INIT);
        let q = Net::new(
            "q",
            &layer_sizes(obs_dim, cfg.hidden, cfg.hidden_layers, num_actions),
            1.0,
            cfg.critic_lr,
            cfg.max_grad_norm,
            &mut init,
        );
        let mut target = q.clone();
        target.prefix = "q_target";
        DqnAgent {
            cfg: cfg.clone(),
            q,
            target,
            replay: VecDeque::new(),
            explore_steps: 0,
            updates: 0,
            last_loss: 0.0,
            num_actions,
            rng: crate::stream_rng(seed, super::STREAM_AGENT_SAMPLE),
        }
    }

    /// Current exploration rate.
    pub fn epsilon(&self) -> f64 {
        let c = &self.cfg;
        if c.dqn_eps_decay_steps == 0 {
            return c.dqn_eps_end;
        }
        let frac = (self.explore_steps as f64 / c.dqn_eps_decay_steps as f64).min(1.0);
        c.dqn_eps_start + frac * (c.dqn_eps_end - c.dqn_eps_start)
    }

    pub fn q_values(&self, obs: &[f64]) -> Result<Vec<f64>> {
        self.q.net.predict(obs)
    }

    fn learn(&mut self) -> Result<()> {
        let batch = self.cfg.batch_size.max(1);
        if self.replay.len() < batch {
            return Ok(());
        }
        let idx = minibatch(&mut self.rng, self.replay.len(), batch);
        let scale = 1.0 / idx.len() as f64;
        let mut grads = zeros_like(self.q.net.params());
        let mut loss = 0.0;
        for &i in &idx {
            let e = &self.replay[i];
            let next = if e.done {
                0.0
            } else {
                self.target.net.predict(&e.next_obs)?.into_iter().fold(f64::NEG_INFINITY, f64::max)
            };
            let y = e.reward + self.cfg.gamma * next;
            let (q, cache) = self.q.net.forward(&e.obs)?;
            let err = q[e.action] - y;
            loss += err * err * scale;
            let mut g = vec![0.0; q.len()];
            g[e.action] = 2.0 * err * scale;
            self.q.net.backward_into(&cache, &g, &mut grads)?;
        }
        self.q.step(&mut grads)?;
        self.last_loss = loss;
        self.updates += 1;
        if self.updates % self.cfg.dqn_target_sync.max(1) == 0 {
            self.target.net = self.q.net.clone();
        }
        if !loss.is_finite() {
            return Err(Error::NonFinite {
                block: format!("dqn loss {loss}"),
            });
        }
        Ok(())
    }
}

impl Agent for DqnAgent {
    fn name(&self) -> &'static str {
        "dqn"
    }

    fn act(&mut self, obs: &[f64], explore: bool) -> Result<Decision> {
        let q = self.q.net.predict(obs)?;
        check_action_count(q.len(), self.num_actions)?;
        let action = if explore {
            let eps = self.epsilon();
            self.explore_steps += 1;
            if self.rng.gen::<f64>() < eps {
                self.rng.gen_range(0..self.num_actions)
            } else {
                argmax(&q)
            }
        } else {
            argmax(&q)
        };
        Ok(Decision {
            action,
            log_prob: 0.0,
            value_r: q[action],
            value_c: 0.0,
        })
    }

    fn observe(&mut self, t: &Transition) -> Result<()> {
        if self.replay.len() == self.cfg.dqn_replay.max(1) {
            self.replay.pop_front();
        }
        self.replay.push_back(Experience {
            obs: t.obs.clone(),
            action: t.action,
            reward: t.reward,
            next_obs: t.next_obs.clone(),
            done: t.done,
        });
        self.learn()
    }

    fn update(&mut self, _episodes: &[Episode]) -> Result<UpdateStats> {
        Ok(UpdateStats {
            value_loss: self.last_loss,
            epsilon: self.epsilon(),
            ..UpdateStats::default()
        })
    }

    fn params(&self) -> Vec<Tensor<f64>> {
        let mut out = self.q.named_params();
        out.extend(self.target.named_params());
        out
    }

    fn load_params(&mut self, params: &[Tensor<f64>]) -> Result<()> {
        self.q.load(params)?;
        self.target.load(params)
    }
}
