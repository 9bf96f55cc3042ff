use rand_chacha::ChaCha8Rng;

use super::agent::{choose, layer_sizes, minibatch, Agent, Decision, Episode, Net, UpdateStats};
use super::gae::{
    clipped_surrogate, combined_advantage, compute_gae, lagrangian_update, normalize, surrogate_is_clipped,
};
use crate::error::{Error, Result};
use crate::nn::{zeros_like, Categorical, Tensor};
use crate::scenario::TrainConfig;

/// How the PPO agent treats the cost signal.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PpoVariant {
    /// Reward and cost critics plus a Lagrange multiplier.
    Lagrangian,
    /// Cost ignored.
    RewardOnly,
    /// Single critic on `r_norm - c_norm`, both min-max normalised with the
    /// ranges seen in the first update.
    Penalty,
}

/// Min-max ranges used by the penalty variant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PenaltyScale {
    pub r_min: f64,
    pub r_max: f64,
    pub c_min: f64,
    pub c_max: f64,
}

impl PenaltyScale {
    pub fn from_episodes(episodes: &[Episode]) -> Self {
        let mut s = PenaltyScale {
            r_min: f64::INFINITY,
            r_max: f64::NEG_INFINITY,
            c_min: f64::INFINITY,
            c_max: f64::NEG_INFINITY,
        };
        for t in episodes.iter().flat_map(|e| &e.transitions) {
            s.r_min = s.r_min.min(t.reward);
            s.r_max = s.r_max.max(t.reward);
            s.c_min = s.c_min.min(t.cost);
            s.c_max = s.c_max.max(t.cost);
        }
        s
    }

    /// `r_norm - c_norm`; a degenerate range maps to zero.
    pub fn combine(&self, r: f64, c: f64) -> f64 {
        let norm = |x: f64, lo: f64, hi: f64| if hi - lo > 1e-12 { (x - lo) / (hi - lo) } else { 0.0 };
        norm(r, self.r_min, self.r_max) - norm(c, self.c_min, self.c_max)
    }
}

/// Clipped-surrogate PPO with GAE. In the Lagrangian variant the multiplier
/// is updated first, then the actor, then the reward critic, then the cost
/// critic.
#[derive(Clone, Debug)]
pub struct PpoAgent {
    variant: PpoVariant,
    cfg: TrainConfig,
    actor: Net,
    critic: Net,
    cost_critic: Option<Net>,
    lambda: f64,
    penalty: Option<PenaltyScale>,
    frozen: bool,
    num_actions: usize,
    rng: ChaCha8Rng,
}

impl PpoAgent {
    pub fn new(variant: PpoVariant, obs_dim: usize, num_actions: usize, cfg: &TrainConfig, seed: u64) -> Self {
        let mut init = crate::stream_rng(seed, super::STREAM_AGENT_INIT);
        let (h, l) = (cfg.hidden, cfg.hidden_layers);
        let actor = Net::new(
            "actor",
            &layer_sizes(obs_dim, h, l, num_actions),
            0.01,
            cfg.actor_lr,
            cfg.max_grad_norm,
            &mut init,
        );
        let critic = Net::new(
            "critic",
            &layer_sizes(obs_dim, h, l, 1),
            1.0,
            cfg.critic_lr,
            cfg.max_grad_norm,
            &mut init,
        );
        let cost_critic = (variant == PpoVariant::Lagrangian).then(|| {
            Net::new(
                "cost_critic",
                &layer_sizes(obs_dim, h, l, 1),
                1.0,
                cfg.critic_lr,
                cfg.max_grad_norm,
                &mut init,
            )
        });
        PpoAgent {
            variant,
            cfg: cfg.clone(),
            actor,
            critic,
            cost_critic,
            lambda: if variant == PpoVariant::Lagrangian { cfg.lambda_init } else { 0.0 },
            penalty: None,
            frozen: false,
            num_actions,
            rng: crate::stream_rng(seed, super::STREAM_AGENT_SAMPLE),
        }
    }

    pub fn variant(&self) -> PpoVariant {
        self.variant
    }

    /// A frozen agent still updates its multiplier but leaves every network
    /// untouched.
    pub fn set_frozen(&mut self, frozen: bool) {
        self.frozen = frozen;
    }

    pub fn penalty_scale(&self) -> Option<PenaltyScale> {
        self.penalty
    }

    pub fn actor_logits(&self, obs: &[f64]) -> Result<Vec<f64>> {
        self.actor.net.predict(obs)
    }

    fn cost_return(&self, episodes: &[Episode]) -> f64 {
        let sum: f64 = episodes
            .iter()
            .map(|e| if self.cfg.discounted_cost_return { e.discounted_cost } else { e.cost_sum })
            .sum();
        sum / episodes.len() as f64
    }
}

impl Agent for PpoAgent {
    fn name(&self) -> &'static str {
        match self.variant {
            PpoVariant::Lagrangian => "ppolag",
            PpoVariant::RewardOnly => "ppo",
            PpoVariant::Penalty => "ppopenalty",
        }
    }

    fn act(&mut self, obs: &[f64], explore: bool) -> Result<Decision> {
        let logits = self.actor.net.predict(obs)?;
        super::agent::check_action_count(logits.len(), self.num_actions)?;
        let (action, log_prob) = choose(&logits, explore, &mut self.rng);
        let value_r = self.critic.value(obs)?;
        let value_c = match &self.cost_critic {
            Some(c) => c.value(obs)?,
            None => 0.0,
        };
        Ok(Decision {
            action,
            log_prob,
            value_r,
            value_c,
        })
    }

    fn update(&mut self, episodes: &[Episode]) -> Result<UpdateStats> {
        if episodes.is_empty() || episodes.iter().all(Episode::is_empty) {
            return Err(Error::InsufficientData("no transitions to learn from".into()));
        }
        let cfg = self.cfg.clone();
        let mut stats = UpdateStats::default();
        if self.variant == PpoVariant::Lagrangian {
            stats.cost_return = self.cost_return(episodes);
            self.lambda = lagrangian_update(self.lambda, stats.cost_return, cfg.cost_limit, cfg.lambda_lr);
        }
        if self.variant == PpoVariant::Penalty && self.penalty.is_none() {
            self.penalty = Some(PenaltyScale::from_episodes(episodes));
        }
        stats.lambda = self.lambda;

        let mut obs: Vec<&[f64]> = Vec::new();
        let mut actions = Vec::new();
        let mut old_logp = Vec::new();
        let mut adv = Vec::new();
        let mut target_r = Vec::new();
        let mut target_c = Vec::new();
        for ep in episodes {
            let signal: Vec<f64> = match (self.variant, self.penalty) {
                (PpoVariant::Penalty, Some(p)) => ep.transitions.iter().map(|t| p.combine(t.reward, t.cost)).collect(),
                _ => ep.rewards(),
            };
            let mut vr: Vec<f64> = ep.transitions.iter().map(|t| t.value_r).collect();
            vr.push(0.0);
            let a_r = compute_gae(&signal, &vr, cfg.gamma, cfg.gae_lambda)?;
            target_r.extend(a_r.iter().zip(&vr).map(|(a, v)| a + v));
            let a = if self.cost_critic.is_some() {
                let mut vc: Vec<f64> = ep.transitions.iter().map(|t| t.value_c).collect();
                vc.push(0.0);
                let a_c = compute_gae(&ep.costs(), &vc, cfg.gamma, cfg.gae_lambda)?;
                target_c.extend(a_c.iter().zip(&vc).map(|(a, v)| a + v));
                combined_advantage(&a_r, &a_c, self.lambda)?
            } else {
                a_r
            };
            adv.extend(a);
            for t in &ep.transitions {
                obs.push(&t.obs);
                actions.push(t.action);
                old_logp.push(t.log_prob);
            }
        }
        if cfg.normalize_advantages {
            normalize(&mut adv);
        }
        if self.frozen {
            return Ok(stats);
        }

        let n = obs.len();
        let iters = cfg.update_iters.max(1);
        let (mut pl, mut ent, mut clipped, mut seen) = (0.0, 0.0, 0usize, 0usize);
        for it in 0..iters {
            let idx = minibatch(&mut self.rng, n, cfg.batch_size);
            let scale = 1.0 / idx.len() as f64;
            let mut grads = zeros_like(self.actor.net.params());
            let mut dev = 0.0;
            for &i in &idx {
                let (logits, cache) = self.actor.net.forward(obs[i])?;
                let dist = Categorical::from_logits(&logits);
                let ratio = (dist.log_prob(actions[i]) - old_logp[i]).exp();
                dev += (ratio - 1.0).abs() * scale;
                pl -= clipped_surrogate(ratio, adv[i], cfg.clip_eps) * scale;
                ent += dist.entropy() * scale;
                let mut g = vec![0.0; logits.len()];
                if surrogate_is_clipped(ratio, adv[i], cfg.clip_eps) {
                    clipped += 1;
                } else {
                    for (gk, dk) in g.iter_mut().zip(dist.grad_log_prob(actions[i])) {
                        *gk -= adv[i] * ratio * dk * scale;
                    }
                }
                for (gk, hk) in g.iter_mut().zip(dist.grad_entropy()) {
                    *gk -= cfg.entropy_coef * hk * scale;
                }
                seen += 1;
                self.actor.net.backward_into(&cache, &g, &mut grads)?;
            }
            if it == 0 {
                stats.first_ratio_deviation = dev;
            }
            self.actor.step(&mut grads)?;
        }
        stats.policy_loss = pl / iters as f64;
        stats.entropy = ent / iters as f64;
        stats.clip_fraction = clipped as f64 / seen.max(1) as f64;
        stats.value_loss = self.critic.fit_values(&obs, &target_r, cfg.batch_size, iters, &mut self.rng)?;
        if let Some(cc) = self.cost_critic.as_mut() {
            stats.cost_value_loss = cc.fit_values(&obs, &target_c, cfg.batch_size, iters, &mut self.rng)?;
        }
        if !(stats.policy_loss.is_finite() && stats.value_loss.is_finite() && stats.cost_value_loss.is_finite()) {
            return Err(Error::NonFinite {
                block: format!(
                    "{} losses (policy {}, value {}, cost value {})",
                    self.name(),
                    stats.policy_loss,
                    stats.value_loss,
                    stats.cost_value_loss
                ),
            });
        }
        Ok(stats)
    }

    fn lambda(&self) -> f64 {
        self.lambda
    }

    fn params(&self) -> Vec<Tensor<f64>> {
        let mut out = self.actor.named_params();
        out.extend(self.critic.named_params());
        if let Some(c) = &self.cost_critic {
            out.extend(c.named_params());
        }
        out.push(Tensor::from_vec("lambda", 1, 1, vec![self.lambda]).expect("1x1"));
        if let Some(p) = self.penalty {
            out.push(Tensor::from_vec("penalty_scale", 4, 1, vec![p.r_min, p.r_max, p.c_min, p.c_max]).expect("4x1"));
        }
        out
    }

    fn load_params(&mut self, params: &[Tensor<f64>]) -> Result<()> {
        self.actor.load(params)?;
        self.critic.load(params)?;
        if let Some(c) = self.cost_critic.as_mut() {
            c.load(params)?;
        }
        if let Some(t) = params.iter().find(|t| t.name() == "lambda") {
            self.lambda = t.data()[0];
        }
        if let Some(t) = params.iter().find(|t| t.name() == "penalty_scale") {
            let d = t.data();
            if d.len() != 4 {
                return Err(Error::Checkpoint("penalty_scale needs 4 values".into()));
            }
            self.penalty = Some(PenaltyScale {
                r_min: d[0],
                r_max: d[1],
                c_min: d[2],
                c_max: d[3],
            });
        }
        Ok(())
    }
}
