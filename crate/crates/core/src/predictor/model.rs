use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{uniform_fan_in, Adam, zeros_like, LstmStack, LstmState, Tensor};
use crate::Scalar;

/// LSTM encoder-decoder with a linear output head.
///
/// The encoder reads `L_e` feature vectors; its final state seeds the
/// decoder, which emits one demand vector per step through the head.
#[derive(Clone, Debug, PartialEq)]
pub struct Seq2Seq<T> {
    encoder: LstmStack<T>,
    decoder: LstmStack<T>,
    /// `[W (out x hidden), b (out x 1)]`.
    head: Vec<Tensor<T>>,
    decoder_len: usize,
}

/// One training example: encoder inputs, the demand observed at the last
/// encoder step, and the `L_d` target demands that follow.
#[derive(Clone, Debug, PartialEq)]
pub struct SeqPair<T> {
    pub inputs: Vec<Vec<T>>,
    pub last: Vec<T>,
    pub targets: Vec<Vec<T>>,
}

impl<T: Scalar> Seq2Seq<T> {
    pub fn new<R: Rng + ?Sized>(
        input_dim: usize,
        output_dim: usize,
        hidden: usize,
        layers: usize,
        dropout: f64,
        decoder_len: usize,
        rng: &mut R,
    ) -> Self {
        let encoder = LstmStack::new(input_dim, hidden, layers, dropout, rng);
        let decoder = LstmStack::new(output_dim, hidden, layers, dropout, rng);
        let mut w = Tensor::zeros("head.weight", output_dim, hidden);
        uniform_fan_in(&mut w, hidden, 1.0, rng);
        Seq2Seq {
            encoder,
            decoder,
            head: vec![w, Tensor::zeros("head.bias", output_dim, 1)],
            decoder_len,
        }
    }

    pub fn zeros(input_dim: usize, output_dim: usize, hidden: usize, layers: usize, decoder_len: usize) -> Self {
        Seq2Seq {
            encoder: LstmStack::zeros(input_dim, hidden, layers, 0.0),
            decoder: LstmStack::zeros(output_dim, hidden, layers, 0.0),
            head: vec![
                Tensor::zeros("head.weight", output_dim, hidden),
                Tensor::zeros("head.bias", output_dim, 1),
            ],
            decoder_len,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.input_size()
    }

    pub fn output_dim(&self) -> usize {
        self.head[1].rows()
    }

    pub fn decoder_len(&self) -> usize {
        self.decoder_len
    }

    pub fn head_bias_mut(&mut self) -> &mut [T] {
        self.head[1].data_mut()
    }

    /// All parameters: encoder, decoder, head. Names carry the block prefix.
    pub fn params(&self) -> Vec<Tensor<T>> {
        let enc = self.encoder.params().iter().map(|t| t.clone().with_name(format!("encoder.{}", t.name())));
        let dec = self.decoder.params().iter().map(|t| t.clone().with_name(format!("decoder.{}", t.name())));
        enc.chain(dec).chain(self.head.iter().cloned()).collect()
    }

    pub fn num_params(&self) -> usize {
        self.encoder.params().len() + self.decoder.params().len() + self.head.len()
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut Tensor<T>> {
        self.encoder
            .params_mut()
            .iter_mut()
            .chain(self.decoder.params_mut().iter_mut())
            .chain(self.head.iter_mut())
    }

    /// One optimizer step with gradients laid out as in [`params`](Self::params).
    pub fn apply_gradients(&mut self, opt: &mut Adam<T>, grads: &mut [Tensor<T>]) -> Result<()> {
        let mut params = self.params();
        opt.step(&mut params, grads)?;
        self.set_params(&params)
    }

    pub fn set_params(&mut self, params: &[Tensor<T>]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::Checkpoint(format!(
                "predictor expects {} tensors, got {}",
                self.num_params(),
                params.len()
            )));
        }
        for (dst, src) in self.params_mut().zip(params) {
            if dst.shape() != src.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor {} has shape {:?}, expected {:?}",
                    src.name(),
                    src.shape(),
                    dst.shape()
                )));
            }
            dst.data_mut().copy_from_slice(src.data());
        }
        Ok(())
    }

    fn head_apply(&self, h: &[T]) -> Vec<T> {
        let mut y = self.head[1].data().to_vec();
        self.head[0].matvec_add(h, &mut y);
        y
    }

    /// Autoregressive forecast: the decoder starts from `last` and is then
    /// fed its own previous output. Dropout is off.
    pub fn predict(&self, inputs: &[Vec<T>], last: &[T]) -> Result<Vec<Vec<T>>> {
        if last.len() != self.output_dim() {
            return Err(Error::Shape {
                context: "decoder seed",
                expected: self.output_dim().to_string(),
                got: last.len().to_string(),
            });
        }
        let (_, mut state, _) = self
            .encoder
            .forward::<rand_chacha::ChaCha8Rng>(inputs, &self.encoder.zero_state(), None)?;
        let mut x = last.to_vec();
        let mut out = Vec::with_capacity(self.decoder_len);
        for _ in 0..self.decoder_len {
            let (h, next, _) = self
                .decoder
                .forward::<rand_chacha::ChaCha8Rng>(&[x], &state, None)?;
            let y = self.head_apply(&h[0]);
            state = next;
            x = y.clone();
            out.push(y);
        }
        Ok(out)
    }

    /// Teacher-forced squared error averaged over steps and outputs, plus
    /// its gradient accumulated into `grads` (same order as `params`).
    pub fn loss_and_grad<R: Rng + ?Sized>(
        &self,
        pair: &SeqPair<T>,
        grads: &mut [Tensor<T>],
        scale: T,
        dropout_rng: Option<&mut R>,
    ) -> Result<T> {
        let ld = self.decoder_len;
        if pair.targets.len() != ld {
            return Err(Error::Shape {
                context: "decoder targets",
                expected: ld.to_string(),
                got: pair.targets.len().to_string(),
            });
        }
        let mut rng = dropout_rng;
        let (_, enc_final, enc_cache) =
            self.encoder
                .forward(&pair.inputs, &self.encoder.zero_state(), rng.as_deref_mut())?;
        let mut dec_in = Vec::with_capacity(ld);
        dec_in.push(pair.last.clone());
        dec_in.extend(pair.targets[..ld - 1].iter().cloned());
        let (dec_out, _, dec_cache) = self.decoder.forward(&dec_in, &enc_final, rng.as_deref_mut())?;

        let m = self.output_dim();
        let denom = T::lit((ld * m) as f64);
        let n_enc = self.encoder.params().len();
        let n_dec = self.decoder.params().len();
        let (enc_g, rest) = grads.split_at_mut(n_enc);
        let (dec_g, head_g) = rest.split_at_mut(n_dec);
        let mut loss = T::zero();
        let mut d_out = Vec::with_capacity(ld);
        for (h, y) in dec_out.iter().zip(&pair.targets) {
            let pred = self.head_apply(h);
            let mut dy = Vec::with_capacity(m);
            for (p, t) in pred.iter().zip(y) {
                let e = *p - *t;
                loss += e * e / denom;
                dy.push(scale * T::lit(2.0) * e / denom);
            }
            head_g[0].add_outer(&dy, h);
            head_g[1].add_vec(&dy);
            let mut dh = vec![T::zero(); h.len()];
            self.head[0].matvec_t_add(&dy, &mut dh);
            d_out.push(dh);
        }
        let (_, d_init) = self.decoder.backward(&dec_cache, &d_out, None, dec_g)?;
        let zero_out = vec![vec![T::zero(); self.encoder.hidden()]; pair.inputs.len()];
        self.encoder.backward(&enc_cache, &zero_out, Some(&d_init), enc_g)?;
        Ok(loss)
    }

    pub fn zero_grads(&self) -> Vec<Tensor<T>> {
        zeros_like(&self.params())
    }

    /// Initial state helper for callers that run the decoder by hand.
    pub fn encoder_state(&self, inputs: &[Vec<T>]) -> Result<LstmState<T>> {
        Ok(self
            .encoder
            .forward::<rand_chacha::ChaCha8Rng>(inputs, &self.encoder.zero_state(), None)?
            .1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_model_predicts_head_bias() {
        let mut m = Seq2Seq::<f64>::zeros(4, 2, 3, 2, 5);
        m.head_bias_mut().copy_from_slice(&[0.7, -0.1]);
        let out = m.predict(&vec![vec![1.0; 4]; 5], &[0.3, 0.3]).unwrap();
        assert_eq!(out.len(), 5);
        assert!(out.iter().all(|y| y == &vec![0.7, -0.1]));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let model = Seq2Seq::<f64>::new(3, 2, 4, 2, 0.0, 3, &mut rng);
        let pair = SeqPair {
            inputs: (0..4).map(|i| vec![0.1 * i as f64, -0.2, 0.3]).collect(),
            last: vec![0.5, 0.1],
            targets: vec![vec![0.2, 0.4], vec![0.6, 0.1], vec![0.0, 0.3]],
        };
        let mut grads = model.zero_grads();
        model
            .loss_and_grad::<ChaCha8Rng>(&pair, &mut grads, 1.0, None)
            .unwrap();
        let h = 1e-6;
        let params = model.params();
        for (k, p) in params.iter().enumerate() {
            for i in (0..p.len()).step_by(7) {
                let mut plus = params.clone();
                plus[k].data_mut()[i] += h;
                let mut minus = params.clone();
                minus[k].data_mut()[i] -= h;
                let mut mp = model.clone();
                mp.set_params(&plus).unwrap();
                let mut mm = model.clone();
                mm.set_params(&minus).unwrap();
                let mut scratch = model.zero_grads();
                let lp = mp.loss_and_grad::<ChaCha8Rng>(&pair, &mut scratch, 1.0, None).unwrap();
                let lm = mm.loss_and_grad::<ChaCha8Rng>(&pair, &mut scratch, 1.0, None).unwrap();
                let fd = (lp - lm) / (2.0 * h);
                let an = grads[k].data()[i];
                assert!((fd - an).abs() <= 1e-6 + 1e-4 * fd.abs().max(an.abs()), "{} [{i}]: {fd} vs {an}", p.name());
            }
        }
    }
}
