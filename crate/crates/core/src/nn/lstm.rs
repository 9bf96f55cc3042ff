use rand::Rng;

use super::init::{orthogonal, uniform_fan_in};
use super::Tensor;
use crate::error::{Error, Result};
use crate::Scalar;

/// Stack of LSTM layers. Gate order inside every `4H` block is
/// input, forget, cell candidate, output.
///
/// Parameters are stored flat as `[W_x0, W_h0, b0, W_x1, W_h1, b1, ...]` with
/// `W_x` of shape `4H x in` and `W_h` of shape `4H x H`.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmStack<T> {
    input_size: usize,
    hidden: usize,
    layers: usize,
    dropout: f64,
    params: Vec<Tensor<T>>,
}

/// Per-layer hidden and cell state.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmState<T> {
    pub h: Vec<Vec<T>>,
    pub c: Vec<Vec<T>>,
}

impl<T: Scalar> LstmState<T> {
    pub fn zeros(layers: usize, hidden: usize) -> Self {
        LstmState {
            h: vec![vec![T::zero(); hidden]; layers],
            c: vec![vec![T::zero(); hidden]; layers],
        }
    }
}

#[derive(Clone, Debug)]
struct StepCache<T> {
    x: Vec<T>,
    h_prev: Vec<T>,
    c_prev: Vec<T>,
    /// Activated gates, `4H`.
    gates: Vec<T>,
    tanh_c: Vec<T>,
}

/// Everything [`LstmStack::backward`] needs from a forward pass.
#[derive(Clone, Debug)]
pub struct LstmCache<T> {
    /// `steps[layer][t]`.
    steps: Vec<Vec<StepCache<T>>>,
    /// Dropout masks applied to the output of `layer` (already scaled), for
    /// all but the top layer; `None` when dropout was off.
    masks: Option<Vec<Vec<Vec<T>>>>,
}

fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

impl<T: Scalar> LstmStack<T> {
    /// Orthogonal recurrent weights, scaled-uniform input weights, zero biases
    /// except the forget gate which starts at 1.
    pub fn new<R: Rng + ?Sized>(input_size: usize, hidden: usize, layers: usize, dropout: f64, rng: &mut R) -> Self {
        let mut stack = Self::zeros(input_size, hidden, layers, dropout);
        for l in 0..layers {
            let fan_in = if l == 0 { input_size } else { hidden };
            uniform_fan_in(&mut stack.params[3 * l], fan_in, 1.0, rng);
            let w_h = &mut stack.params[3 * l + 1];
            for gate in 0..4 {
                let q = orthogonal(hidden, rng);
                for (r, row) in q.iter().enumerate() {
                    for (c, &v) in row.iter().enumerate() {
                        *w_h.at_mut(gate * hidden + r, c) = T::lit(v);
                    }
                }
            }
            let b = stack.params[3 * l + 2].data_mut();
            b[hidden..2 * hidden].iter_mut().for_each(|x| *x = T::one());
        }
        stack
    }

    pub fn zeros(input_size: usize, hidden: usize, layers: usize, dropout: f64) -> Self {
        assert!(layers >= 1 && hidden >= 1);
        let params = (0..layers)
            .flat_map(|l| {
                let fan_in = if l == 0 { input_size } else { hidden };
                [
                    Tensor::zeros(format!("lstm{l}.w_input"), 4 * hidden, fan_in),
                    Tensor::zeros(format!("lstm{l}.w_hidden"), 4 * hidden, hidden),
                    Tensor::zeros(format!("lstm{l}.bias"), 4 * hidden, 1),
                ]
            })
            .collect();
        LstmStack {
            input_size,
            hidden,
            layers,
            dropout,
            params,
        }
    }

    pub fn from_params(params: Vec<Tensor<T>>, dropout: f64) -> Result<Self> {
        if params.is_empty() || params.len() % 3 != 0 {
            return Err(Error::Checkpoint(format!(
                "LSTM stack needs (w_input, w_hidden, bias) triples, got {} tensors",
                params.len()
            )));
        }
        let hidden = params[1].cols();
        let input_size = params[0].cols();
        let layers = params.len() / 3;
        let template = Self::zeros(input_size, hidden, layers, dropout);
        for (a, b) in template.params.iter().zip(&params) {
            if a.shape() != b.shape() {
                return Err(Error::Checkpoint(format!(
                    "LSTM tensor {} has shape {:?}, expected {:?}",
                    b.name(),
                    b.shape(),
                    a.shape()
                )));
            }
        }
        Ok(LstmStack {
            input_size,
            hidden,
            layers,
            dropout,
            params,
        })
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn dropout(&self) -> f64 {
        self.dropout
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.params
    }

    pub fn zero_state(&self) -> LstmState<T> {
        LstmState::zeros(self.layers, self.hidden)
    }

    fn check(&self, inputs: &[Vec<T>], init: &LstmState<T>) -> Result<()> {
        if inputs.is_empty() {
            return Err(Error::Shape {
                context: "LSTM sequence length",
                expected: ">= 1".into(),
                got: "0".into(),
            });
        }
        if let Some(bad) = inputs.iter().find(|x| x.len() != self.input_size) {
            return Err(Error::Shape {
                context: "LSTM input width",
                expected: self.input_size.to_string(),
                got: bad.len().to_string(),
            });
        }
        let ok = init.h.len() == self.layers
            && init.c.len() == self.layers
            && init.h.iter().chain(&init.c).all(|v| v.len() == self.hidden);
        if !ok {
            return Err(Error::Shape {
                context: "LSTM initial state",
                expected: format!("{} layers x {}", self.layers, self.hidden),
                got: format!("{} layers", init.h.len()),
            });
        }
        Ok(())
    }

    fn cell(&self, layer: usize, x: &[T], h_prev: &[T], c_prev: &[T]) -> StepCache<T> {
        let hd = self.hidden;
        let mut z = self.params[3 * layer + 2].data().to_vec();
        self.params[3 * layer].matvec_add(x, &mut z);
        self.params[3 * layer + 1].matvec_add(h_prev, &mut z);
        for (k, v) in z.iter_mut().enumerate() {
            *v = if (2 * hd..3 * hd).contains(&k) {
                v.tanh()
            } else {
                sigmoid(*v)
            };
        }
        let tanh_c = (0..hd)
            .map(|j| (z[hd + j] * c_prev[j] + z[j] * z[2 * hd + j]).tanh())
            .collect();
        StepCache {
            x: x.to_vec(),
            h_prev: h_prev.to_vec(),
            c_prev: c_prev.to_vec(),
            gates: z,
            tanh_c,
        }
    }

    /// Runs the stack over `inputs`. With `dropout_rng` set and a non-zero
    /// dropout rate, inverted-dropout masks are drawn between layers.
    /// Returns top-layer outputs, the final state and the backward cache.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        inputs: &[Vec<T>],
        init: &LstmState<T>,
        mut dropout_rng: Option<&mut R>,
    ) -> Result<(Vec<Vec<T>>, LstmState<T>, LstmCache<T>)> {
        self.check(inputs, init)?;
        let hd = self.hidden;
        let use_dropout = self.dropout > 0.0 && dropout_rng.is_some() && self.layers > 1;
        let keep = 1.0 - self.dropout;
        let mut masks = use_dropout.then(Vec::new);
        let mut layer_inputs: Vec<Vec<T>> = inputs.to_vec();
        let mut steps = Vec::with_capacity(self.layers);
        let mut final_state = LstmState::zeros(self.layers, hd);
        for l in 0..self.layers {
            let mut h = init.h[l].clone();
            let mut c = init.c[l].clone();
            let mut caches = Vec::with_capacity(layer_inputs.len());
            let mut outputs = Vec::with_capacity(layer_inputs.len());
            for x in &layer_inputs {
                let step = self.cell(l, x, &h, &c);
                c = (0..hd)
                    .map(|j| step.gates[hd + j] * step.c_prev[j] + step.gates[j] * step.gates[2 * hd + j])
                    .collect();
                h = (0..hd).map(|j| step.gates[3 * hd + j] * step.tanh_c[j]).collect();
                outputs.push(h.clone());
                caches.push(step);
            }
            final_state.h[l] = h;
            final_state.c[l] = c;
            steps.push(caches);
            if l + 1 < self.layers {
                if let (Some(masks), Some(rng)) = (masks.as_mut(), dropout_rng.as_deref_mut()) {
                    let scale = T::lit(1.0 / keep);
                    let layer_masks: Vec<Vec<T>> = outputs
                        .iter()
                        .map(|_| {
                            (0..hd)
                                .map(|_| if rng.gen::<f64>() < keep { scale } else { T::zero() })
                                .collect()
                        })
                        .collect();
                    for (o, m) in outputs.iter_mut().zip(&layer_masks) {
                        o.iter_mut().zip(m).for_each(|(v, &mv)| *v *= mv);
                    }
                    masks.push(layer_masks);
                }
            }
            layer_inputs = outputs;
        }
        Ok((layer_inputs, final_state, LstmCache { steps, masks }))
    }

    /// Backpropagation through time. `d_outputs[t]` is the loss gradient with
    /// respect to the top-layer output at step `t`; `d_final` optionally adds
    /// gradients with respect to the final `(h, c)` of every layer.
    /// Parameter gradients are accumulated into `grads`; returns the input
    /// gradients and the gradient with respect to the initial state.
    pub fn backward(
        &self,
        cache: &LstmCache<T>,
        d_outputs: &[Vec<T>],
        d_final: Option<&LstmState<T>>,
        grads: &mut [Tensor<T>],
    ) -> Result<(Vec<Vec<T>>, LstmState<T>)> {
        let seq = cache.steps.first().map_or(0, Vec::len);
        if d_outputs.len() != seq || d_outputs.iter().any(|d| d.len() != self.hidden) {
            return Err(Error::Shape {
                context: "LSTM output gradient",
                expected: format!("{seq} x {}", self.hidden),
                got: format!("{} steps", d_outputs.len()),
            });
        }
        if grads.len() != self.params.len() {
            return Err(Error::Shape {
                context: "LSTM gradient buffers",
                expected: self.params.len().to_string(),
                got: grads.len().to_string(),
            });
        }
        let hd = self.hidden;
        let mut d_init = LstmState::zeros(self.layers, hd);
        let mut d_out: Vec<Vec<T>> = d_outputs.to_vec();
        for l in (0..self.layers).rev() {
            let (mut dh_next, mut dc_next) = match d_final {
                Some(s) => (s.h[l].clone(), s.c[l].clone()),
                None => (vec![T::zero(); hd], vec![T::zero(); hd]),
            };
            let in_width = if l == 0 { self.input_size } else { hd };
            let mut d_in = vec![vec![T::zero(); in_width]; seq];
            let mut dz = vec![T::zero(); 4 * hd];
            for t in (0..seq).rev() {
                let s = &cache.steps[l][t];
                for j in 0..hd {
                    let (i, f, g, o) = (s.gates[j], s.gates[hd + j], s.gates[2 * hd + j], s.gates[3 * hd + j]);
                    let dh = d_out[t][j] + dh_next[j];
                    let tc = s.tanh_c[j];
                    let dc = dc_next[j] + dh * o * (T::one() - tc * tc);
                    dz[j] = dc * g * i * (T::one() - i);
                    dz[hd + j] = dc * s.c_prev[j] * f * (T::one() - f);
                    dz[2 * hd + j] = dc * i * (T::one() - g * g);
                    dz[3 * hd + j] = dh * tc * o * (T::one() - o);
                    dc_next[j] = dc * f;
                }
                grads[3 * l].add_outer(&dz, &s.x);
                grads[3 * l + 1].add_outer(&dz, &s.h_prev);
                grads[3 * l + 2].add_vec(&dz);
                self.params[3 * l].matvec_t_add(&dz, &mut d_in[t]);
                let mut dh_prev = vec![T::zero(); hd];
                self.params[3 * l + 1].matvec_t_add(&dz, &mut dh_prev);
                dh_next = dh_prev;
            }
            d_init.h[l] = dh_next;
            d_init.c[l] = dc_next;
            if l > 0 {
                if let Some(masks) = &cache.masks {
                    for (d, m) in d_in.iter_mut().zip(&masks[l - 1]) {
                        d.iter_mut().zip(m).for_each(|(v, &mv)| *v *= mv);
                    }
                }
            }
            d_out = d_in;
        }
        Ok((d_out, d_init))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    type NoRng = ChaCha8Rng;

    #[test]
    fn zero_weight_stack_outputs_zero() {
        let stack = LstmStack::<f64>::zeros(3, 4, 2, 0.0);
        let xs = vec![vec![1.0, 2.0, 3.0]; 4];
        let (out, fin, _) = stack.forward::<NoRng>(&xs, &stack.zero_state(), None).unwrap();
        assert!(out.iter().flatten().all(|&v| v == 0.0));
        assert!(fin.h.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn single_step_equals_cell_application() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let stack = LstmStack::<f64>::new(2, 3, 1, 0.0, &mut rng);
        let x = vec![0.3, -0.7];
        let init = LstmState {
            h: vec![vec![0.1, 0.2, -0.1]],
            c: vec![vec![-0.5, 0.0, 0.4]],
        };
        let (out, fin, _) = stack.forward::<NoRng>(&[x.clone()], &init, None).unwrap();

        // Hand-evaluated gate equations.
        let p = stack.params();
        let mut z = p[2].data().to_vec();
        p[0].matvec_add(&x, &mut z);
        p[1].matvec_add(&init.h[0], &mut z);
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        for j in 0..3 {
            let (i, f, g, o) = (sig(z[j]), sig(z[3 + j]), z[6 + j].tanh(), sig(z[9 + j]));
            let c = f * init.c[0][j] + i * g;
            let h = o * c.tanh();
            assert!((fin.c[0][j] - c).abs() < 1e-15);
            assert!((out[0][j] - h).abs() < 1e-15);
        }
    }

    #[test]
    fn forget_bias_starts_at_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let stack = LstmStack::<f64>::new(2, 4, 2, 0.5, &mut rng);
        let b = stack.params()[2].data();
        assert!(b[4..8].iter().all(|&v| v == 1.0));
        assert!(b[..4].iter().chain(&b[8..]).all(|&v| v == 0.0));
    }

    #[test]
    fn recurrent_blocks_are_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let stack = LstmStack::<f64>::new(2, 5, 1, 0.0, &mut rng);
        let w = &stack.params()[1];
        for gate in 0..4 {
            for a in 0..5 {
                for b in 0..5 {
                    let dot: f64 = (0..5).map(|k| w.at(gate * 5 + a, k) * w.at(gate * 5 + b, k)).sum();
                    let want = if a == b { 1.0 } else { 0.0 };
                    assert!((dot - want).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn empty_sequence_is_rejected() {
        let stack = LstmStack::<f64>::zeros(1, 1, 1, 0.0);
        assert!(stack.forward::<NoRng>(&[], &stack.zero_state(), None).is_err());
    }

    #[test]
    fn dropout_is_inactive_without_rng() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let stack = LstmStack::<f64>::new(2, 6, 2, 0.5, &mut rng);
        let xs = vec![vec![0.5, -0.2]; 3];
        let a = stack.forward::<NoRng>(&xs, &stack.zero_state(), None).unwrap().0;
        let b = stack.forward::<NoRng>(&xs, &stack.zero_state(), None).unwrap().0;
        assert_eq!(a, b);
    }
}
