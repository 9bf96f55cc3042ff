use crate::error::{Error, Result};

/// Generalized advantage estimates for one complete episode.
///
/// `values` holds `V(s_0) .. V(s_T)` including the bootstrap value of the
/// state after the last step (zero at a terminal state).
pub fn compute_gae(signal: &[f64], values: &[f64], gamma: f64, eta: f64) -> Result<Vec<f64>> {
    if values.len() != signal.len() + 1 {
        return Err(Error::Shape {
            context: "GAE values",
            expected: (signal.len() + 1).to_string(),
            got: values.len().to_string(),
        });
    }
    let mut adv = vec![0.0; signal.len()];
    let mut acc = 0.0;
    for t in (0..signal.len()).rev() {
        let delta = signal[t] + gamma * values[t + 1] - values[t];
        acc = delta + gamma * eta * acc;
        adv[t] = acc;
    }
    Ok(adv)
}

/// `A_r - lambda * A_c`.
pub fn combined_advantage(reward_adv: &[f64], cost_adv: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if reward_adv.len() != cost_adv.len() {
        return Err(Error::Shape {
            context: "combined advantage",
            expected: reward_adv.len().to_string(),
            got: cost_adv.len().to_string(),
        });
    }
    Ok(reward_adv.iter().zip(cost_adv).map(|(r, c)| r - lambda * c).collect())
}

/// Projected dual ascent step `max(0, lambda + lr * (j_c - limit))`.
pub fn lagrangian_update(lambda: f64, j_c: f64, limit: f64, lr: f64) -> f64 {
    (lambda + lr * (j_c - limit)).max(0.0)
}

/// Per-sample PPO objective `min(ratio * adv, clip(ratio, 1 - eps, 1 + eps) * adv)`.
pub fn clipped_surrogate(ratio: f64, adv: f64, eps: f64) -> f64 {
    (ratio * adv).min(ratio.clamp(1.0 - eps, 1.0 + eps) * adv)
}

/// Whether the clipped branch is the active one, in which case the sample
/// contributes no policy gradient.
pub(crate) fn surrogate_is_clipped(ratio: f64, adv: f64, eps: f64) -> bool {
    (adv > 0.0 && ratio > 1.0 + eps) || (adv < 0.0 && ratio < 1.0 - eps)
}

/// Discounted sum `sum_k gamma^k x_k`.
pub fn discounted_sum(xs: &[f64], gamma: f64) -> f64 {
    xs.iter().rev().fold(0.0, |acc, x| x + gamma * acc)
}

/// Rescales to zero mean and unit variance; a constant input becomes zeros.
pub fn normalize(xs: &mut [f64]) {
    if xs.is_empty() {
        return;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    for x in xs.iter_mut() {
        *x = if std > 1e-8 { (*x - mean) / std } else { 0.0 };
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_step_is_delta() {
        let a = compute_gae(&[1.5], &[0.5, 0.0], 0.97, 0.95).unwrap();
        assert_eq!(a, vec![1.0]);
    }

    #[test]
    fn zero_eta_gives_td_errors() {
        let r = [1.0, 2.0, 3.0];
        let v = [0.1, 0.2, 0.3, 0.0];
        let a = compute_gae(&r, &v, 0.9, 0.0).unwrap();
        for t in 0..3 {
            assert!((a[t] - (r[t] + 0.9 * v[t + 1] - v[t])).abs() < 1e-15);
        }
    }

    #[test]
    fn length_mismatch_errors() {
        assert!(compute_gae(&[1.0, 2.0], &[0.0, 0.0], 0.9, 0.9).is_err());
        assert!(combined_advantage(&[1.0], &[], 1.0).is_err());
    }

    #[test]
    fn combined_and_dual_examples() {
        assert_eq!(combined_advantage(&[2.0], &[1.0], 0.5).unwrap(), vec![1.5]);
        assert_eq!(combined_advantage(&[0.3, -1.0], &[0.3, -1.0], 1.0).unwrap(), vec![0.0, 0.0]);
        assert!((lagrangian_update(0.5, 1.0, 0.0, 0.035) - 0.535).abs() < 1e-15);
        assert_eq!(lagrangian_update(0.5, 0.0, 0.0, 0.035), 0.5);
        assert_eq!(lagrangian_update(0.01, -10.0, 0.0, 0.035), 0.0);
    }

    #[test]
    fn clip_examples() {
        assert!((clipped_surrogate(1.5, 1.0, 0.2) - 1.2).abs() < 1e-15);
        assert!((clipped_surrogate(0.5, -1.0, 0.2) + 0.8).abs() < 1e-15);
        assert_eq!(clipped_surrogate(1.0, 0.7, 0.2), 0.7);
    }
}
