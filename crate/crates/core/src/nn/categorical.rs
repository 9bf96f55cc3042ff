use rand::Rng;

use crate::Scalar;

/// Categorical distribution parameterised by logits, computed with a
/// max-shifted softmax.
#[derive(Clone, Debug, PartialEq)]
pub struct Categorical<T> {
    probs: Vec<T>,
    log_probs: Vec<T>,
}

impl<T: Scalar> Categorical<T> {
    pub fn from_logits(logits: &[T]) -> Self {
        assert!(!logits.is_empty(), "categorical over zero actions");
        let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
        let sum: T = logits.iter().map(|&l| (l - max).exp()).sum();
        let log_z = max + sum.ln();
        let log_probs: Vec<T> = logits.iter().map(|&l| l - log_z).collect();
        let probs = log_probs.iter().map(|l| l.exp()).collect();
        Categorical { probs, log_probs }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    pub fn log_prob(&self, action: usize) -> T {
        self.log_probs[action]
    }

    pub fn entropy(&self) -> T {
        -self
            .probs
            .iter()
            .zip(&self.log_probs)
            .map(|(&p, &l)| if p > T::zero() { p * l } else { T::zero() })
            .sum::<T>()
    }

    /// Most probable action; lowest index wins ties.
    pub fn mode(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }

    /// Inverse-CDF sampling from a single uniform draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (i, p) in self.probs.iter().enumerate() {
            acc += p.to_f64_lossy();
            if u < acc {
                return i;
            }
        }
        // Rounding left a sliver above the last cumulative sum.
        self.probs
            .iter()
            .rposition(|&p| p > T::zero())
            .unwrap_or(self.probs.len() - 1)
    }

    /// Gradient of `log p(action)` with respect to the logits.
    pub fn grad_log_prob(&self, action: usize) -> Vec<T> {
        let mut g: Vec<T> = self.probs.iter().map(|&p| -p).collect();
        g[action] += T::one();
        g
    }

    /// Gradient of the entropy with respect to the logits.
    pub fn grad_entropy(&self) -> Vec<T> {
        let h = self.entropy();
        self.probs
            .iter()
            .zip(&self.log_probs)
            .map(|(&p, &l)| -p * (l + h))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_logits_have_log_n_entropy() {
        let d = Categorical::from_logits(&[0.0f64; 4]);
        assert!((d.entropy() - 4f64.ln()).abs() < 1e-12);
        assert_eq!(d.mode(), 0);
    }

    #[test]
    fn huge_logits_stay_finite() {
        let d = Categorical::from_logits(&[1e4f64, 0.0, -1e4]);
        assert!(d.probs().iter().all(|p| p.is_finite()));
        assert!((d.probs()[0] - 1.0).abs() < 1e-12);
        assert!(d.log_prob(2).is_finite());
    }

    #[test]
    fn sampling_frequencies_follow_probs() {
        let d = Categorical::from_logits(&[0.0f64, 1.0, 2.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut counts = [0usize; 3];
        let n = 60_000;
        for _ in 0..n {
            counts[d.sample(&mut rng)] += 1;
        }
        for (c, p) in counts.iter().zip(d.probs()) {
            assert!((*c as f64 / n as f64 - p).abs() < 0.01);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let logits = [0.3f64, -1.2, 0.8, 0.1];
        let d = Categorical::from_logits(&logits);
        let g_lp = d.grad_log_prob(2);
        let g_h = d.grad_entropy();
        let eps = 1e-6;
        for i in 0..logits.len() {
            let mut up = logits;
            let mut dn = logits;
            up[i] += eps;
            dn[i] -= eps;
            let (u, v) = (Categorical::from_logits(&up), Categorical::from_logits(&dn));
            let fd_lp = (u.log_prob(2) - v.log_prob(2)) / (2.0 * eps);
            let fd_h = (u.entropy() - v.entropy()) / (2.0 * eps);
            assert!((fd_lp - g_lp[i]).abs() < 1e-7);
            assert!((fd_h - g_h[i]).abs() < 1e-7);
        }
    }
}
