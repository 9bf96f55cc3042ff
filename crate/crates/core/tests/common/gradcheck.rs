//! Central finite-difference gradient checks on randomized configurations.

use chargerec::nn::{DenseNet, LstmStack, LstmState, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;

/// `||a - n|| / (||a|| + ||n||)` over all entries, 0 when both vanish.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
    let scale = analytic.iter().map(|a| a * a).sum::<f64>().sqrt() + numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

fn randn(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn flatten(ts: &[Tensor<f64>]) -> Vec<f64> {
    ts.iter().flat_map(|t| t.data().iter().copied()).collect()
}

/// Numeric gradient of `loss` with respect to every entry of `params`.
fn numeric_grad(params: &mut [Tensor<f64>], mut loss: impl FnMut(&[Tensor<f64>]) -> f64) -> Vec<f64> {
    let mut out = Vec::new();
    for b in 0..params.len() {
        for i in 0..params[b].len() {
            let orig = params[b].data()[i];
            params[b].data_mut()[i] = orig + FD_STEP;
            let up = loss(params);
            params[b].data_mut()[i] = orig - FD_STEP;
            let down = loss(params);
            params[b].data_mut()[i] = orig;
            out.push((up - down) / (2.0 * FD_STEP));
        }
    }
    out
}

/// Dense net with random depth and widths; the loss is a random linear
/// functional of the output. Returns the relative error over parameter and
/// input gradients.
pub fn dense_config(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let depth = rng.gen_range(1..=3);
    let sizes: Vec<usize> = (0..=depth).map(|_| rng.gen_range(1..=6)).collect();
    let mut net = DenseNet::<f64>::new(&sizes, 1.0, &mut rng);
    for p in net.params_mut() {
        for v in p.data_mut() {
            *v += rng.gen_range(-0.3..0.3);
        }
    }
    let x = randn(&mut rng, sizes[0]);
    let w = randn(&mut rng, *sizes.last().unwrap());
    let dot = |o: &[f64]| o.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();

    let (_, cache) = net.forward(&x).unwrap();
    let (grads, dx) = net.backward(&cache, &w).unwrap();
    let mut analytic = flatten(&grads);
    analytic.extend(&dx);

    let mut params = net.params().to_vec();
    let mut numeric = numeric_grad(&mut params, |p| {
        dot(&DenseNet::from_params(p.to_vec()).unwrap().predict(&x).unwrap())
    });
    for i in 0..x.len() {
        let mut xp = x.clone();
        xp[i] += FD_STEP;
        let up = dot(&net.predict(&xp).unwrap());
        xp[i] -= 2.0 * FD_STEP;
        let down = dot(&net.predict(&xp).unwrap());
        numeric.push((up - down) / (2.0 * FD_STEP));
    }
    relative_error(&analytic, &numeric)
}

/// LSTM stack with random shape and sequence length, random initial state,
/// and a loss that is a random linear functional of every output and of the
/// final `(h, c)`. Returns the relative error over parameter, input and
/// initial-state gradients.
pub fn lstm_config(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let input = rng.gen_range(1..=4);
    let hidden = rng.gen_range(1..=5);
    let layers = rng.gen_range(1..=3);
    let seq = rng.gen_range(1..=6);
    let mut stack = LstmStack::<f64>::new(input, hidden, layers, 0.0, &mut rng);
    for p in stack.params_mut() {
        for v in p.data_mut() {
            *v += rng.gen_range(-0.3..0.3);
        }
    }
    let xs: Vec<Vec<f64>> = (0..seq).map(|_| randn(&mut rng, input)).collect();
    let init = LstmState {
        h: (0..layers).map(|_| randn(&mut rng, hidden)).collect(),
        c: (0..layers).map(|_| randn(&mut rng, hidden)).collect(),
    };
    let w_out: Vec<Vec<f64>> = (0..seq).map(|_| randn(&mut rng, hidden)).collect();
    let w_fin = LstmState {
        h: (0..layers).map(|_| randn(&mut rng, hidden)).collect(),
        c: (0..layers).map(|_| randn(&mut rng, hidden)).collect(),
    };
    let loss = |s: &LstmStack<f64>, xs: &[Vec<f64>], init: &LstmState<f64>| {
        let (outs, fin, _) = s.forward::<ChaCha8Rng>(xs, init, None).unwrap();
        let mut l = 0.0;
        for (o, w) in outs.iter().zip(&w_out) {
            l += o.iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
        }
        for k in 0..layers {
            l += fin.h[k].iter().zip(&w_fin.h[k]).map(|(a, b)| a * b).sum::<f64>();
            l += fin.c[k].iter().zip(&w_fin.c[k]).map(|(a, b)| a * b).sum::<f64>();
        }
        l
    };

    let (_, _, cache) = stack.forward::<ChaCha8Rng>(&xs, &init, None).unwrap();
    let mut grads: Vec<Tensor<f64>> = stack.params().iter().map(|t| Tensor::zeros(t.name(), t.rows(), t.cols())).collect();
    let (d_in, d_init) = stack.backward(&cache, &w_out, Some(&w_fin), &mut grads).unwrap();
    let mut analytic = flatten(&grads);
    analytic.extend(d_in.iter().flatten());
    analytic.extend(d_init.h.iter().flatten());
    analytic.extend(d_init.c.iter().flatten());

    let mut params = stack.params().to_vec();
    let mut numeric = numeric_grad(&mut params, |p| {
        loss(&LstmStack::from_params(p.to_vec(), 0.0).unwrap(), &xs, &init)
    });
    let bump = |f: &mut dyn FnMut(f64) -> f64| (f(FD_STEP) - f(-FD_STEP)) / (2.0 * FD_STEP);
    for t in 0..seq {
        for i in 0..input {
            numeric.push(bump(&mut |h| {
                let mut xp = xs.clone();
                xp[t][i] += h;
                loss(&stack, &xp, &init)
            }));
        }
    }
    for which in 0..2 {
        for k in 0..layers {
            for j in 0..hidden {
                numeric.push(bump(&mut |h| {
                    let mut s = init.clone();
                    if which == 0 {
                        s.h[k][j] += h;
                    } else {
                        s.c[k][j] += h;
                    }
                    loss(&stack, &xs, &s)
                }));
            }
        }
    }
    relative_error(&analytic, &numeric)
}
