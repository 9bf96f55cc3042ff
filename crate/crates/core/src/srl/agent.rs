use rand::seq::index::sample;
use rand::Rng;

use crate::env::EpisodeMetrics;
use crate::error::{Error, Result};
use crate::nn::{Adam, Categorical, DenseNet, Tensor};

/// What an agent chose in one state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Decision {
    pub action: usize,
    pub log_prob: f64,
    pub value_r: f64,
    pub value_c: f64,
}

/// One CMDP transition as stored in the rollout buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: usize,
    pub log_prob: f64,
    pub reward: f64,
    pub cost: f64,
    pub value_r: f64,
    pub value_c: f64,
    pub next_obs: Vec<f64>,
    pub done: bool,
}

/// A complete episode with its returns.
#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub seed: u64,
    pub transitions: Vec<Transition>,
    pub reward_sum: f64,
    pub cost_sum: f64,
    pub discounted_cost: f64,
    pub metrics: Option<EpisodeMetrics>,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.transitions.iter().map(|t| t.reward).collect()
    }

    pub fn costs(&self) -> Vec<f64> {
        self.transitions.iter().map(|t| t.cost).collect()
    }
}

/// Diagnostics of one agent update.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct UpdateStats {
    pub lambda: f64,
    /// Epoch-mean episode cost return used for the multiplier step.
    pub cost_return: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub cost_value_loss: f64,
    pub entropy: f64,
    /// Mean `|ratio - 1|` over the first minibatch of the epoch.
    pub first_ratio_deviation: f64,
    pub clip_fraction: f64,
    pub epsilon: f64,
}

/// A learning policy over a discrete action set.
pub trait Agent {
    fn name(&self) -> &'static str;

    /// Samples an action when `explore`, otherwise picks the greedy one.
    fn act(&mut self, obs: &[f64], explore: bool) -> Result<Decision>;

    /// Called after every environment step while training.
    fn observe(&mut self, _transition: &Transition) -> Result<()> {
        Ok(())
    }

    /// Learns from one epoch of complete episodes.
    fn update(&mut self, episodes: &[Episode]) -> Result<UpdateStats>;

    fn lambda(&self) -> f64 {
        0.0
    }

    /// Named parameter tensors, ready for a checkpoint.
    fn params(&self) -> Vec<Tensor<f64>>;

    fn load_params(&mut self, params: &[Tensor<f64>]) -> Result<()>;
}

/// Dense network with its optimizer; parameter names carry `prefix`.
#[derive(Clone, Debug)]
pub(crate) struct Net {
    pub prefix: &'static str,
    pub net: DenseNet<f64>,
    pub opt: Adam<f64>,
}

impl Net {
    pub fn new<R: Rng + ?Sized>(
        prefix: &'static str,
        sizes: &[usize],
        output_gain: f64,
        lr: f64,
        max_grad_norm: f64,
        rng: &mut R,
    ) -> Self {
        let mut opt = Adam::new(lr);
        if max_grad_norm > 0.0 {
            opt = opt.with_max_grad_norm(max_grad_norm);
        }
        Net {
            prefix,
            net: DenseNet::new(sizes, output_gain, rng),
            opt,
        }
    }

    pub fn named_params(&self) -> Vec<Tensor<f64>> {
        self.net
            .params()
            .iter()
            .map(|t| t.clone().with_name(format!("{}.{}", self.prefix, t.name())))
            .collect()
    }

    /// Copies the tensors named `<prefix>.*` from `params`.
    pub fn load(&mut self, params: &[Tensor<f64>]) -> Result<()> {
        let pre = format!("{}.", self.prefix);
        let mine: Vec<Tensor<f64>> = params
            .iter()
            .filter_map(|t| t.name().strip_prefix(&pre).map(|n| t.clone().with_name(n)))
            .collect();
        if mine.len() != self.net.params().len() {
            return Err(Error::Checkpoint(format!(
                "{} expects {} tensors, checkpoint has {}",
                self.prefix,
                self.net.params().len(),
                mine.len()
            )));
        }
        let net = DenseNet::from_params(mine)?;
        if net.sizes() != self.net.sizes() {
            return Err(Error::Checkpoint(format!(
                "{} has layer sizes {:?}, expected {:?}",
                self.prefix,
                net.sizes(),
                self.net.sizes()
            )));
        }
        self.net = net;
        Ok(())
    }

    pub fn value(&self, obs: &[f64]) -> Result<f64> {
        Ok(self.net.predict(obs)?[0])
    }

    /// Minibatch regression of a scalar head onto `targets`; returns the
    /// mean squared error before the step.
    pub fn fit_values<R: Rng + ?Sized>(
        &mut self,
        obs: &[&[f64]],
        targets: &[f64],
        batch: usize,
        iters: usize,
        rng: &mut R,
    ) -> Result<f64> {
        let mut total = 0.0;
        for _ in 0..iters {
            let idx = minibatch(rng, obs.len(), batch);
            let mut grads = crate::nn::zeros_like(self.net.params());
            let scale = 1.0 / idx.len() as f64;
            let mut loss = 0.0;
            for &i in &idx {
                let (v, cache) = self.net.forward(obs[i])?;
                let e = v[0] - targets[i];
                loss += e * e * scale;
                self.net.backward_into(&cache, &[2.0 * e * scale], &mut grads)?;
            }
            self.step(&mut grads)?;
            total += loss;
        }
        Ok(total / iters.max(1) as f64)
    }

    pub fn step(&mut self, grads: &mut [Tensor<f64>]) -> Result<()> {
        self.opt.step(self.net.params_mut(), grads).map_err(|e| match e {
            Error::NonFinite { block } => Error::NonFinite {
                block: format!("{}.{block}", self.prefix),
            },
            other => other,
        })
    }
}

/// `min(batch, n)` distinct indices, or all of them in order when the batch
/// covers the data.
pub(crate) fn minibatch<R: Rng + ?Sized>(rng: &mut R, n: usize, batch: usize) -> Vec<usize> {
    if batch >= n {
        (0..n).collect()
    } else {
        sample(rng, n, batch).into_vec()
    }
}

/// Policy decision from actor logits.
pub(crate) fn choose<R: Rng + ?Sized>(logits: &[f64], explore: bool, rng: &mut R) -> (usize, f64) {
    let dist = Categorical::from_logits(logits);
    let action = if explore { dist.sample(rng) } else { dist.mode() };
    (action, dist.log_prob(action))
}

pub(crate) fn check_action_count(got: usize, expected: usize) -> Result<()> {
    if got != expected {
        return Err(Error::Shape {
            context: "actor output",
            expected: expected.to_string(),
            got: got.to_string(),
        });
    }
    Ok(())
}

/// Hidden-layer sizes for a network from `input` to `output`.
pub(crate) fn layer_sizes(input: usize, hidden: usize, layers: usize, output: usize) -> Vec<usize> {
    let mut sizes = vec![input];
    sizes.extend(std::iter::repeat(hidden).take(layers));
    sizes.push(output);
    sizes
}
