use rand::Rng;

use super::init::uniform_fan_in;
use super::Tensor;
use crate::error::{Error, Result};
use crate::Scalar;

/// Fully connected network with `tanh` hidden activations and an identity
/// output layer. Policies put a softmax on top via [`super::Categorical`].
#[derive(Clone, Debug, PartialEq)]
pub struct DenseNet<T> {
    sizes: Vec<usize>,
    /// `[W0, b0, W1, b1, ...]`, `W_l` is `out x in`, `b_l` is `out x 1`.
    params: Vec<Tensor<T>>,
}

/// Layer inputs recorded by [`DenseNet::forward`]; `activations[l]` is the input
/// to layer `l`, the last entry is the network output.
#[derive(Clone, Debug)]
pub struct DenseCache<T> {
    activations: Vec<Vec<T>>,
}

impl<T> DenseCache<T> {
    pub fn output(&self) -> &[T] {
        self.activations.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

impl<T: Scalar> DenseNet<T> {
    /// Scaled-uniform weights and zero biases. `output_gain` scales the last
    /// layer's init range (small values give near-uniform initial policies).
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], output_gain: f64, rng: &mut R) -> Self {
        let mut net = Self::zeros(sizes);
        let layers = net.num_layers();
        for l in 0..layers {
            let gain = if l + 1 == layers { output_gain } else { 1.0 };
            let fan_in = sizes[l];
            uniform_fan_in(&mut net.params[2 * l], fan_in, gain, rng);
        }
        net
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2, "a dense net needs at least input and output sizes");
        let params = sizes
            .windows(2)
            .enumerate()
            .flat_map(|(l, w)| {
                [
                    Tensor::zeros(format!("dense{l}.weight"), w[1], w[0]),
                    Tensor::zeros(format!("dense{l}.bias"), w[1], 1),
                ]
            })
            .collect();
        DenseNet {
            sizes: sizes.to_vec(),
            params,
        }
    }

    /// Rebuilds a network from a parameter list, e.g. a loaded checkpoint.
    pub fn from_params(params: Vec<Tensor<T>>) -> Result<Self> {
        if params.is_empty() || params.len() % 2 != 0 {
            return Err(Error::Checkpoint(format!(
                "dense net needs weight/bias pairs, got {} tensors",
                params.len()
            )));
        }
        let mut sizes = vec![params[0].cols()];
        for pair in params.chunks(2) {
            let (w, b) = (&pair[0], &pair[1]);
            if w.cols() != *sizes.last().unwrap() || b.shape() != (w.rows(), 1) {
                return Err(Error::Checkpoint(format!(
                    "inconsistent dense layer shapes {:?} / {:?}",
                    w.shape(),
                    b.shape()
                )));
            }
            sizes.push(w.rows());
        }
        Ok(DenseNet { sizes, params })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_size(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.params
    }

    pub fn into_params(self) -> Vec<Tensor<T>> {
        self.params
    }

    fn check_input(&self, input: &[T]) -> Result<()> {
        if input.len() != self.input_size() {
            return Err(Error::Shape {
                context: "DenseNet input",
                expected: self.input_size().to_string(),
                got: input.len().to_string(),
            });
        }
        Ok(())
    }

    pub fn predict(&self, input: &[T]) -> Result<Vec<T>> {
        self.check_input(input)?;
        let mut x = input.to_vec();
        let layers = self.num_layers();
        for l in 0..layers {
            let mut y = self.params[2 * l + 1].data().to_vec();
            self.params[2 * l].matvec_add(&x, &mut y);
            if l + 1 < layers {
                y.iter_mut().for_each(|v| *v = v.tanh());
            }
            x = y;
        }
        Ok(x)
    }

    pub fn forward(&self, input: &[T]) -> Result<(Vec<T>, DenseCache<T>)> {
        self.check_input(input)?;
        let layers = self.num_layers();
        let mut activations = Vec::with_capacity(layers + 1);
        activations.push(input.to_vec());
        for l in 0..layers {
            let mut y = self.params[2 * l + 1].data().to_vec();
            self.params[2 * l].matvec_add(&activations[l], &mut y);
            if l + 1 < layers {
                y.iter_mut().for_each(|v| *v = v.tanh());
            }
            activations.push(y);
        }
        let out = activations.last().unwrap().clone();
        Ok((out, DenseCache { activations }))
    }

    /// Accumulates parameter gradients into `grads` (same layout as
    /// [`Self::params`]) and returns the gradient with respect to the input.
    pub fn backward_into(
        &self,
        cache: &DenseCache<T>,
        grad_output: &[T],
        grads: &mut [Tensor<T>],
    ) -> Result<Vec<T>> {
        if grad_output.len() != self.output_size() {
            return Err(Error::Shape {
                context: "DenseNet output gradient",
                expected: self.output_size().to_string(),
                got: grad_output.len().to_string(),
            });
        }
        if grads.len() != self.params.len() || cache.activations.len() != self.sizes.len() {
            return Err(Error::Shape {
                context: "DenseNet gradient buffers",
                expected: self.params.len().to_string(),
                got: grads.len().to_string(),
            });
        }
        let layers = self.num_layers();
        let mut delta = grad_output.to_vec();
        for l in (0..layers).rev() {
            if l + 1 < layers {
                // d tanh = 1 - y^2 on this layer's output.
                let y = &cache.activations[l + 1];
                delta
                    .iter_mut()
                    .zip(y)
                    .for_each(|(d, &yv)| *d *= T::one() - yv * yv);
            }
            let x = &cache.activations[l];
            grads[2 * l].add_outer(&delta, x);
            grads[2 * l + 1].add_vec(&delta);
            let mut dx = vec![T::zero(); x.len()];
            self.params[2 * l].matvec_t_add(&delta, &mut dx);
            delta = dx;
        }
        Ok(delta)
    }

    /// Fresh parameter gradients plus the input gradient.
    pub fn backward(&self, cache: &DenseCache<T>, grad_output: &[T]) -> Result<(Vec<Tensor<T>>, Vec<T>)> {
        let mut grads = super::zeros_like(&self.params);
        let dx = self.backward_into(cache, grad_output, &mut grads)?;
        Ok((grads, dx))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_net_outputs_zero() {
        let net = DenseNet::<f64>::zeros(&[3, 4, 2]);
        assert_eq!(net.predict(&[1.0, -2.0, 5.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_like_net_passes_gradient_through() {
        let mut net = DenseNet::<f64>::zeros(&[1, 1]);
        net.params_mut()[0].data_mut()[0] = 1.0;
        let (y, cache) = net.forward(&[0.7]).unwrap();
        assert_eq!(y, vec![0.7]);
        let (grads, dx) = net.backward(&cache, &[2.5]).unwrap();
        assert_eq!(dx, vec![2.5]);
        assert_eq!(grads[0].data(), &[2.5 * 0.7]);
        assert_eq!(grads[1].data(), &[2.5]);
    }

    #[test]
    fn forward_and_predict_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = DenseNet::<f64>::new(&[5, 8, 8, 3], 1.0, &mut rng);
        let x = [0.1, -0.3, 0.9, 0.0, 2.0];
        assert_eq!(net.predict(&x).unwrap(), net.forward(&x).unwrap().0);
    }

    #[test]
    fn rejects_wrong_input_width() {
        let net = DenseNet::<f32>::zeros(&[2, 2]);
        assert!(matches!(net.predict(&[1.0]), Err(Error::Shape { .. })));
    }

    #[test]
    fn params_roundtrip_through_from_params() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = DenseNet::<f64>::new(&[4, 6, 2], 0.01, &mut rng);
        let rebuilt = DenseNet::from_params(net.params().to_vec()).unwrap();
        assert_eq!(rebuilt, net);
    }
}
