use num_complex::Complex;

use super::linalg::lu_solve;
use super::network::{BusKind, PowerNetwork};
use crate::error::{Error, Result};
use crate::Scalar;

/// Net per-bus demand at one instant, in kW / kvar, indexed like
/// [`PowerNetwork::buses`].
#[derive(Clone, Debug, PartialEq)]
pub struct InjectionProfile {
    pub p_kw: Vec<f64>,
    pub q_kvar: Vec<f64>,
}

impl InjectionProfile {
    pub fn base(net: &PowerNetwork) -> Self {
        InjectionProfile {
            p_kw: net.buses().iter().map(|b| b.p_base_kw).collect(),
            q_kvar: net.buses().iter().map(|b| b.q_base_kvar).collect(),
        }
    }

    pub fn zero(net: &PowerNetwork) -> Self {
        InjectionProfile {
            p_kw: vec![0.0; net.num_buses()],
            q_kvar: vec![0.0; net.num_buses()],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PfOptions {
    /// Convergence threshold on the largest power mismatch, p.u.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PfOptions {
    fn default() -> Self {
        PfOptions { tol: 1e-8, max_iter: 30 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PfSolution<T = f64> {
    /// Voltage magnitudes, p.u.
    pub v: Vec<T>,
    /// Voltage angles, rad.
    pub theta: Vec<T>,
    pub iterations: usize,
    /// Largest absolute P/Q mismatch at exit, p.u.
    pub residual: f64,
}

/// Base demand plus charging load on each station's bus. `cs_buses[m]` is the
/// bus index of station `m`. Charging draws active power only.
pub fn bus_injections(net: &PowerNetwork, cs_loads_kw: &[f64], cs_buses: &[usize]) -> Result<InjectionProfile> {
    if cs_loads_kw.len() != cs_buses.len() {
        return Err(Error::Shape {
            context: "bus_injections",
            expected: format!("{} station loads", cs_buses.len()),
            got: cs_loads_kw.len().to_string(),
        });
    }
    let mut inj = InjectionProfile::base(net);
    for (&load, &b) in cs_loads_kw.iter().zip(cs_buses) {
        let bus = net.buses().get(b).ok_or_else(|| Error::DanglingReference {
            entity: "bus",
            id: format!("index {b}"),
        })?;
        if bus.kind == BusKind::Slack {
            return Err(Error::invalid(
                "charging_station.bus",
                format!("bus {} is the slack bus", bus.id),
            ));
        }
        inj.p_kw[b] += load;
    }
    Ok(inj)
}

struct Admittance<T> {
    n: usize,
    g: Vec<T>,
    b: Vec<T>,
}

impl<T: Scalar> Admittance<T> {
    fn build(net: &PowerNetwork) -> Self {
        let n = net.num_buses();
        let mut y = vec![Complex::new(T::zero(), T::zero()); n * n];
        for (i, j, r, x) in net.lines_pu() {
            let yl = Complex::new(T::one(), T::zero()) / Complex::new(T::lit(r), T::lit(x));
            y[i * n + i] += yl;
            y[j * n + j] += yl;
            y[i * n + j] -= yl;
            y[j * n + i] -= yl;
        }
        Admittance {
            n,
            g: y.iter().map(|c| c.re).collect(),
            b: y.iter().map(|c| c.im).collect(),
        }
    }

    /// Calculated injections `(P_i, Q_i)` for the current state.
    fn injections(&self, v: &[T], th: &[T]) -> (Vec<T>, Vec<T>) {
        let n = self.n;
        let mut p = vec![T::zero(); n];
        let mut q = vec![T::zero(); n];
        for i in 0..n {
            for k in 0..n {
                let (g, b) = (self.g[i * n + k], self.b[i * n + k]);
                if g == T::zero() && b == T::zero() {
                    continue;
                }
                let (s, c) = (th[i] - th[k]).sin_cos();
                p[i] += v[i] * v[k] * (g * c + b * s);
                q[i] += v[i] * v[k] * (g * s - b * c);
            }
        }
        (p, q)
    }
}

fn specified<T: Scalar>(net: &PowerNetwork, inj: &InjectionProfile) -> Result<(Vec<T>, Vec<T>)> {
    let n = net.num_buses();
    if inj.p_kw.len() != n || inj.q_kvar.len() != n {
        return Err(Error::Shape {
            context: "injection profile",
            expected: n.to_string(),
            got: format!("{}/{}", inj.p_kw.len(), inj.q_kvar.len()),
        });
    }
    let kw_base = net.base_mva() * 1000.0;
    // Demand is consumption, so the injected power is its negative.
    let p = inj.p_kw.iter().map(|&x| T::lit(-x / kw_base)).collect();
    let q = inj.q_kvar.iter().map(|&x| T::lit(-x / kw_base)).collect();
    Ok((p, q))
}

fn max_mismatch<T: Scalar>(slack: usize, p_spec: &[T], q_spec: &[T], p: &[T], q: &[T]) -> (Vec<T>, f64) {
    let n = p.len();
    let mut f = Vec::with_capacity(2 * (n - 1));
    for i in (0..n).filter(|&i| i != slack) {
        f.push(p_spec[i] - p[i]);
    }
    for i in (0..n).filter(|&i| i != slack) {
        f.push(q_spec[i] - q[i]);
    }
    let worst = f.iter().fold(0.0f64, |m, x| {
        let a = x.abs().to_f64_lossy();
        if a.is_nan() {
            f64::NAN
        } else {
            m.max(a)
        }
    });
    (f, worst)
}

/// Largest absolute P/Q mismatch (p.u.) over all non-slack buses when `sol`
/// is substituted back into the power-flow equations.
pub fn power_mismatch<T: Scalar>(net: &PowerNetwork, inj: &InjectionProfile, sol: &PfSolution<T>) -> Result<f64> {
    let (p_spec, q_spec) = specified::<T>(net, inj)?;
    let (p, q) = Admittance::<T>::build(net).injections(&sol.v, &sol.theta);
    Ok(max_mismatch(net.slack_index(), &p_spec, &q_spec, &p, &q).1)
}

/// Newton-Raphson in polar coordinates from a flat start. The slack bus is
/// held at `1.0 ∠ 0`; every other bus is a PQ bus.
pub fn solve_power_flow<T: Scalar>(net: &PowerNetwork, inj: &InjectionProfile, opts: PfOptions) -> Result<PfSolution<T>> {
    let (p_spec, q_spec) = specified::<T>(net, inj)?;
    let y = Admittance::<T>::build(net);
    let n = y.n;
    let slack = net.slack_index();
    let pq: Vec<usize> = (0..n).filter(|&i| i != slack).collect();
    let m = pq.len();
    let mut v = vec![T::one(); n];
    let mut th = vec![T::zero(); n];
    if m == 0 {
        return Ok(PfSolution {
            v,
            theta: th,
            iterations: 0,
            residual: 0.0,
        });
    }
    // Position of each bus among the unknowns.
    let mut col = vec![usize::MAX; n];
    for (k, &i) in pq.iter().enumerate() {
        col[i] = k;
    }
    let mut iterations = 0;
    loop {
        let (p, q) = y.injections(&v, &th);
        let (mut f, residual) = max_mismatch(slack, &p_spec, &q_spec, &p, &q);
        if residual < opts.tol {
            return Ok(PfSolution {
                v,
                theta: th,
                iterations,
                residual,
            });
        }
        if iterations >= opts.max_iter || !residual.is_finite() {
            return Err(Error::PowerFlowDiverged { iterations, residual });
        }
        let dim = 2 * m;
        let mut jac = vec![T::zero(); dim * dim];
        for (r, &i) in pq.iter().enumerate() {
            for k in 0..n {
                let (g, b) = (y.g[i * n + k], y.b[i * n + k]);
                if k == slack || (g == T::zero() && b == T::zero()) {
                    continue;
                }
                let c = col[k];
                if k == i {
                    let vi = v[i];
                    let (gii, bii) = (g, b);
                    jac[r * dim + c] = -q[i] - bii * vi * vi;
                    jac[r * dim + m + c] = p[i] / vi + gii * vi;
                    jac[(m + r) * dim + c] = p[i] - gii * vi * vi;
                    jac[(m + r) * dim + m + c] = q[i] / vi - bii * vi;
                } else {
                    let (s, cs) = (th[i] - th[k]).sin_cos();
                    let a = g * s - b * cs;
                    let d = g * cs + b * s;
                    jac[r * dim + c] = v[i] * v[k] * a;
                    jac[r * dim + m + c] = v[i] * d;
                    jac[(m + r) * dim + c] = -v[i] * v[k] * d;
                    jac[(m + r) * dim + m + c] = v[i] * a;
                }
            }
        }
        lu_solve(&mut jac, &mut f)?;
        for (k, &i) in pq.iter().enumerate() {
            th[i] += f[k];
            v[i] += f[m + k];
        }
        iterations += 1;
    }
}

/// Per-bus `|v_b - v_ref|` and its mean over all buses.
pub fn voltage_deviation<T: Scalar>(sol: &PfSolution<T>, v_ref: T) -> (Vec<T>, T) {
    let dev: Vec<T> = sol.v.iter().map(|&v| (v - v_ref).abs()).collect();
    let mean = dev.iter().copied().sum::<T>() / T::lit(dev.len().max(1) as f64);
    (dev, mean)
}

/// Mean voltage magnitude over all buses, slack included.
pub fn average_voltage<T: Scalar>(sol: &PfSolution<T>) -> T {
    sol.v.iter().copied().sum::<T>() / T::lit(sol.v.len().max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::super::{Bus, Line};
    use super::*;

    fn two_bus(r: f64, x: f64, load_kw: f64) -> (PowerNetwork, InjectionProfile) {
        let net = PowerNetwork::new(
            1.0,
            1.0,
            vec![
                Bus {
                    id: 1,
                    kind: BusKind::Slack,
                    p_base_kw: 0.0,
                    q_base_kvar: 0.0,
                },
                Bus {
                    id: 2,
                    kind: BusKind::Pq,
                    p_base_kw: load_kw,
                    q_base_kvar: 0.0,
                },
            ],
            vec![Line {
                from: 1,
                to: 2,
                r_ohm: r,
                x_ohm: x,
            }],
        )
        .unwrap();
        let inj = InjectionProfile::base(&net);
        (net, inj)
    }

    #[test]
    fn no_load_is_flat() {
        let (net, inj) = two_bus(0.05, 0.05, 0.0);
        let sol: PfSolution = solve_power_flow(&net, &inj, PfOptions::default()).unwrap();
        assert_eq!(sol.v, vec![1.0, 1.0]);
        assert_eq!(sol.theta, vec![0.0, 0.0]);
        assert_eq!(sol.iterations, 0);
        assert_eq!(average_voltage(&sol), 1.0);
        assert_eq!(voltage_deviation(&sol, 1.0).1, 0.0);
    }

    #[test]
    fn injections_add_station_load_to_bus() {
        let (net, _) = two_bus(0.05, 0.05, 100.0);
        let inj = bus_injections(&net, &[150.0], &[1]).unwrap();
        assert_eq!(inj.p_kw, vec![0.0, 250.0]);
        assert!(bus_injections(&net, &[1.0], &[0]).is_err());
    }

    #[test]
    fn f32_solve_is_close_to_f64() {
        let (net, inj) = two_bus(0.05, 0.05, 100.0);
        let opts = PfOptions { tol: 1e-5, max_iter: 30 };
        let a: PfSolution<f32> = solve_power_flow(&net, &inj, opts).unwrap();
        let b: PfSolution<f64> = solve_power_flow(&net, &inj, PfOptions::default()).unwrap();
        assert!((a.v[1] as f64 - b.v[1]).abs() < 1e-5);
    }

    #[test]
    fn impossible_load_diverges() {
        let (net, inj) = two_bus(0.5, 0.5, 5000.0);
        let err = solve_power_flow::<f64>(&net, &inj, PfOptions::default()).unwrap_err();
        assert!(matches!(err, Error::PowerFlowDiverged { .. } | Error::SingularJacobian));
    }
}
