//! Independent reference implementations used as test oracles. Nothing here
//! calls into the crate's own solvers.
#![allow(dead_code)]

use std::collections::HashMap;
use std::path::{Path, PathBuf};

pub mod gradcheck;
pub mod periodic;
pub mod rl;

pub fn scenarios_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

/// Radial feeder as parsed straight from the fixture text.
pub struct Feeder {
    pub base_mva: f64,
    pub base_kv: f64,
    /// `(id, p_kw, q_kvar)`, slack first.
    pub buses: Vec<(u32, f64, f64)>,
    /// `(from, to, r_ohm, x_ohm)`.
    pub lines: Vec<(u32, u32, f64, f64)>,
}

pub fn read_feeder(dir: &Path) -> Feeder {
    let buses_txt = std::fs::read_to_string(dir.join("buses.csv")).unwrap();
    let mut base_mva = 0.0;
    let mut base_kv = 0.0;
    let mut buses = Vec::new();
    for line in buses_txt.lines() {
        if let Some(c) = line.strip_prefix('#') {
            for kv in c.split(',') {
                if let Some((k, v)) = kv.split_once('=') {
                    match k.trim() {
                        "base_mva" => base_mva = v.trim().parse().unwrap(),
                        "base_kv" => base_kv = v.trim().parse().unwrap(),
                        _ => {}
                    }
                }
            }
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f[0] == "id" {
            continue;
        }
        buses.push((f[0].parse().unwrap(), f[2].parse().unwrap(), f[3].parse().unwrap()));
    }
    let lines_txt = std::fs::read_to_string(dir.join("lines.csv")).unwrap();
    let lines = lines_txt
        .lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').map(str::trim).collect();
            (f[0].parse().unwrap(), f[1].parse().unwrap(), f[2].parse().unwrap(), f[3].parse().unwrap())
        })
        .collect();
    Feeder {
        base_mva,
        base_kv,
        buses,
        lines,
    }
}

#[derive(Clone, Copy, Debug)]
struct C(f64, f64);

impl C {
    fn add(self, o: C) -> C {
        C(self.0 + o.0, self.1 + o.1)
    }
    fn sub(self, o: C) -> C {
        C(self.0 - o.0, self.1 - o.1)
    }
    fn mul(self, o: C) -> C {
        C(self.0 * o.0 - self.1 * o.1, self.0 * o.1 + self.1 * o.0)
    }
    fn div(self, o: C) -> C {
        let d = o.0 * o.0 + o.1 * o.1;
        C((self.0 * o.0 + self.1 * o.1) / d, (self.1 * o.0 - self.0 * o.1) / d)
    }
    fn conj(self) -> C {
        C(self.0, -self.1)
    }
    fn abs(self) -> f64 {
        self.0.hypot(self.1)
    }
}

/// Backward-forward sweep for a radial feeder rooted at the first bus, with
/// constant-power loads. `extra_kw` adds active demand per bus id. Returns
/// voltage magnitudes keyed by bus id.
pub fn bfs_voltages(feeder: &Feeder, extra_kw: &HashMap<u32, f64>) -> HashMap<u32, f64> {
    let zb = feeder.base_kv * feeder.base_kv / feeder.base_mva;
    let sb = feeder.base_mva * 1000.0;
    let root = feeder.buses[0].0;
    let mut parent: HashMap<u32, (u32, C)> = HashMap::new();
    let mut children: HashMap<u32, Vec<u32>> = HashMap::new();
    // Orient lines away from the root.
    let mut frontier = vec![root];
    let mut seen = vec![root];
    let mut order = Vec::new();
    while let Some(b) = frontier.pop() {
        order.push(b);
        for &(f, t, r, x) in &feeder.lines {
            let other = if f == b {
                t
            } else if t == b {
                f
            } else {
                continue;
            };
            if seen.contains(&other) {
                continue;
            }
            seen.push(other);
            parent.insert(other, (b, C(r / zb, x / zb)));
            children.entry(b).or_default().push(other);
            frontier.push(other);
        }
    }
    let load: HashMap<u32, C> = feeder
        .buses
        .iter()
        .map(|&(id, p, q)| (id, C((p + extra_kw.get(&id).copied().unwrap_or(0.0)) / sb, q / sb)))
        .collect();
    let mut v: HashMap<u32, C> = order.iter().map(|&b| (b, C(1.0, 0.0))).collect();
    for _ in 0..1000 {
        let mut branch: HashMap<u32, C> = HashMap::new();
        for &b in order.iter().rev() {
            let mut i = load[&b].div(v[&b]).conj();
            for c in children.get(&b).map(Vec::as_slice).unwrap_or(&[]) {
                i = i.add(branch[c]);
            }
            branch.insert(b, i);
        }
        let mut delta: f64 = 0.0;
        for &b in &order {
            if let Some(&(p, z)) = parent.get(&b) {
                let nv = v[&p].sub(z.mul(branch[&b]));
                delta = delta.max(nv.sub(v[&b]).abs());
                v.insert(b, nv);
            }
        }
        if delta < 1e-13 {
            break;
        }
    }
    v.into_iter().map(|(b, c)| (b, c.abs())).collect()
}

/// Receiving-end voltage of a two-bus line from the closed-form quadratic
/// `V^4 + (2(Pr + Qx) - 1) V^2 + (P^2 + Q^2)(r^2 + x^2) = 0`, sending end at 1 p.u.
pub fn two_bus_voltage(p: f64, q: f64, r: f64, x: f64) -> f64 {
    let a = 1.0 - 2.0 * (p * r + q * x);
    let disc = a * a - 4.0 * (p * p + q * q) * (r * r + x * x);
    ((a + disc.sqrt()) / 2.0).sqrt()
}
