use super::Tensor;
use crate::error::{Error, Result};
use crate::Scalar;

/// Adam with bias correction. Moment buffers are created lazily on the first
/// step so one optimizer instance is tied to one parameter list.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    max_grad_norm: Option<f64>,
    t: u64,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            max_grad_norm: None,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// Rescales the gradient to this global L2 norm before every step when it
    /// is exceeded.
    pub fn with_max_grad_norm(mut self, max_norm: f64) -> Self {
        self.max_grad_norm = Some(max_norm);
        self
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies one descent step `params -= lr * m_hat / (sqrt(v_hat) + eps)`.
    ///
    /// Non-finite gradients are rejected before anything is modified.
    pub fn step(&mut self, params: &mut [Tensor<T>], grads: &mut [Tensor<T>]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::Shape {
                context: "Adam::step",
                expected: params.len().to_string(),
                got: grads.len().to_string(),
            });
        }
        if let Some(bad) = grads.iter().find(|g| !g.is_finite()) {
            return Err(Error::NonFinite {
                block: bad.name().to_string(),
            });
        }
        if let Some(max) = self.max_grad_norm {
            let norm = super::global_norm(grads).to_f64_lossy();
            if norm > max {
                super::scale_all(grads, T::lit(max / norm));
            }
        }
        if self.m.is_empty() {
            self.m = super::zeros_like(params);
            self.v = super::zeros_like(params);
        }
        self.t += 1;
        let (b1, b2) = (T::lit(self.beta1), T::lit(self.beta2));
        let c1 = T::lit(1.0 - self.beta1.powi(self.t as i32));
        let c2 = T::lit(1.0 - self.beta2.powi(self.t as i32));
        let (lr, eps) = (T::lit(self.lr), T::lit(self.eps));
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads.iter())
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            if p.shape() != g.shape() {
                return Err(Error::Shape {
                    context: "Adam::step",
                    expected: format!("{:?}", p.shape()),
                    got: format!("{:?}", g.shape()),
                });
            }
            for i in 0..p.len() {
                let gi = g.data()[i];
                let mi = b1 * m.data()[i] + (T::one() - b1) * gi;
                let vi = b2 * v.data()[i] + (T::one() - b2) * gi * gi;
                m.data_mut()[i] = mi;
                v.data_mut()[i] = vi;
                p.data_mut()[i] -= lr * (mi / c1) / ((vi / c2).sqrt() + eps);
            }
        }
        if let Some(bad) = params.iter().find(|p| !p.is_finite()) {
            return Err(Error::NonFinite {
                block: bad.name().to_string(),
            });
        }
        Ok(())
    }
}
