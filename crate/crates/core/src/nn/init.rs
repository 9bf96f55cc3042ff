use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::Tensor;
use crate::Scalar;

/// Fills `t` with `U(-s, s)` where `s = gain / sqrt(fan_in)`.
pub fn uniform_fan_in<T: Scalar, R: Rng + ?Sized>(t: &mut Tensor<T>, fan_in: usize, gain: f64, rng: &mut R) {
    let bound = gain / (fan_in.max(1) as f64).sqrt();
    for x in t.data_mut() {
        *x = T::lit(rng.gen_range(-bound..=bound));
    }
}

/// Returns an `n x n` orthogonal matrix (Gram-Schmidt on a Gaussian sample).
pub fn orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n);
    while basis.len() < n {
        let mut v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        for q in &basis {
            let d: f64 = q.iter().zip(&v).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(q).for_each(|(x, qi)| *x -= d * qi);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        // Nearly dependent draws are rejected and redrawn.
        if norm > 1e-6 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    basis
}
