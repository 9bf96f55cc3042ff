use rand_chacha::ChaCha8Rng;

use super::agent::{check_action_count, choose, layer_sizes, Agent, Decision, Episode, Net, UpdateStats};
use super::gae::normalize;
use crate::error::{Error, Result};
use crate::nn::{zeros_like, Categorical, Tensor};
use crate::scenario::TrainConfig;

/// One full-batch policy-gradient step with per-sample weights `weights`.
fn policy_step(actor: &mut Net, samples: &[(&[f64], usize)], weights: &[f64], entropy_coef: f64) -> Result<(f64, f64)> {
    let scale = 1.0 / samples.len() as f64;
    let mut grads = zeros_like(actor.net.params());
    let (mut loss, mut ent) = (0.0, 0.0);
    for (&(obs, action), &w) in samples.iter().zip(weights) {
        let (logits, cache) = actor.net.forward(obs)?;
        let dist = Categorical::from_logits(&logits);
        loss -= w * dist.log_prob(action) * scale;
        ent += dist.entropy() * scale;
        let g: Vec<f64> = dist
            .grad_log_prob(action)
            .iter()
            .zip(dist.grad_entropy())
            .map(|(dl, dh)| -(w * dl + entropy_coef * dh) * scale)
            .collect();
        actor.net.backward_into(&cache, &g, &mut grads)?;
    }
    actor.step(&mut grads)?;
    Ok((loss, ent))
}

fn finite(name: &str, stats: &UpdateStats) -> Result<()> {
    if stats.policy_loss.is_finite() && stats.value_loss.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite {
            block: format!("{name} losses (policy {}, value {})", stats.policy_loss, stats.value_loss),
        })
    }
}

/// Monte-Carlo policy gradient on normalised discounted returns.
#[derive(Clone, Debug)]
pub struct ReinforceAgent {
    cfg: TrainConfig,
    actor: Net,
    num_actions: usize,
    rng: ChaCha8Rng,
}

impl ReinforceAgent {
    pub fn new(obs_dim: usize, num_actions: usize, cfg: &TrainConfig, seed: u64) -> Self {
        let mut init = crate::stream_rng(seed, super::STREAM_AGENT_INIT);
        ReinforceAgent {
            cfg: cfg.clone(),
            actor: Net::new(
                "actor",
                &layer_sizes(obs_dim, cfg.hidden, cfg.hidden_layers, num_actions),
                0.01,
                cfg.actor_lr,
                cfg.max_grad_norm,
                &mut init,
            ),
            num_actions,
            rng: crate::stream_rng(seed, super::STREAM_AGENT_SAMPLE),
        }
    }
}

impl Agent for ReinforceAgent {
    fn name(&self) -> &'static str {
        "reinforce"
    }

    fn act(&mut self, obs: &[f64], explore: bool) -> Result<Decision> {
        let logits = self.actor.net.predict(obs)?;
        check_action_count(logits.len(), self.num_actions)?;
        let (action, log_prob) = choose(&logits, explore, &mut self.rng);
        Ok(Decision {
            action,
            log_prob,
            value_r: 0.0,
            value_c: 0.0,
        })
    }

    fn update(&mut self, episodes: &[Episode]) -> Result<UpdateStats> {
        let mut samples = Vec::new();
        let mut returns = Vec::new();
        for ep in episodes {
            let mut g = vec![0.0; ep.len()];
            let mut acc = 0.0;
            for (t, tr) in ep.transitions.iter().enumerate().rev() {
                acc = tr.reward + self.cfg.gamma * acc;
                g[t] = acc;
            }
            returns.extend(g);
            samples.extend(ep.transitions.iter().map(|t| (t.obs.as_slice(), t.action)));
        }
        if samples.is_empty() {
            return Err(Error::InsufficientData("no transitions to learn from".into()));
        }
        normalize(&mut returns);
        let (policy_loss, entropy) = policy_step(&mut self.actor, &samples, &returns, self.cfg.entropy_coef)?;
        let stats = UpdateStats {
            policy_loss,
            entropy,
            ..UpdateStats::default()
        };
        finite(self.name(), &stats)?;
        Ok(stats)
    }

    fn params(&self) -> Vec<Tensor<f64>> {
        self.actor.named_params()
    }

    fn load_params(&mut self, params: &[Tensor<f64>]) -> Result<()> {
        self.actor.load(params)
    }
}

/// Advantage actor-critic with one-step TD errors.
#[derive(Clone, Debug)]
pub struct ActorCriticAgent {
    cfg: TrainConfig,
    actor: Net,
    critic: Net,
    num_actions: usize,
    rng: ChaCha8Rng,
}

impl ActorCriticAgent {
    pub fn new(obs_dim: usize, num_actions: usize, cfg: &TrainConfig, seed: u64) -> Self {
        let mut init = crate::stream_rng(seed, super::STREAM_AGENT_INIT);
        let (h, l) = (cfg.hidden, cfg.hidden_layers);
        ActorCriticAgent {
            cfg: cfg.clone(),
            actor: Net::new(
                "actor",
                &layer_sizes(obs_dim, h, l, num_actions),
                0.01,
                cfg.actor_lr,
                cfg.max_grad_norm,
                &mut init,
            ),
            critic: Net::new(
                "critic",
                &layer_sizes(obs_dim, h, l, 1),
                1.0,
                cfg.critic_lr,
                cfg.max_grad_norm,
                &mut init,
            ),
            num_actions,
            rng: crate::stream_rng(seed, super::STREAM_AGENT_SAMPLE),
        }
    }
}

impl Agent for ActorCriticAgent {
    fn name(&self) -> &'static str {
        "actorcritic"
    }

    fn act(&mut self, obs: &[f64], explore: bool) -> Result<Decision> {
        let logits = self.actor.net.predict(obs)?;
        check_action_count(logits.len(), self.num_actions)?;
        let (action, log_prob) = choose(&logits, explore, &mut self.rng);
        Ok(Decision {
            action,
            log_prob,
            value_r: self.critic.value(obs)?,
            value_c: 0.0,
        })
    }

    fn update(&mut self, episodes: &[Episode]) -> Result<UpdateStats> {
        let mut samples = Vec::new();
        let mut deltas = Vec::new();
        let mut targets = Vec::new();
        for ep in episodes {
            for tr in &ep.transitions {
                let v = self.critic.value(&tr.obs)?;
                let next = if tr.done { 0.0 } else { self.critic.value(&tr.next_obs)? };
                let target = tr.reward + self.cfg.gamma * next;
                deltas.push(target - v);
                targets.push(target);
                samples.push((tr.obs.as_slice(), tr.action));
            }
        }
        if samples.is_empty() {
            return Err(Error::InsufficientData("no transitions to learn from".into()));
        }
        let (policy_loss, entropy) = policy_step(&mut self.actor, &samples, &deltas, self.cfg.entropy_coef)?;
        let obs: Vec<&[f64]> = samples.iter().map(|s| s.0).collect();
        let n = obs.len();
        let value_loss = self.critic.fit_values(&obs, &targets, n, 1, &mut self.rng)?;
        let stats = UpdateStats {
            policy_loss,
            value_loss,
            entropy,
            ..UpdateStats::default()
        };
        finite(self.name(), &stats)?;
        Ok(stats)
    }

    fn params(&self) -> Vec<Tensor<f64>> {
        let mut out = self.actor.named_params();
        out.extend(self.critic.named_params());
        out
    }

    fn load_params(&mut self, params: &[Tensor<f64>]) -> Result<()> {
        self.actor.load(params)?;
        self.critic.load(params)
    }
}
