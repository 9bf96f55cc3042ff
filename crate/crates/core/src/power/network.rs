use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tables;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Slack,
    Pq,
}

/// A bus with its base (non-EV) demand, positive when consuming.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: u32,
    #[serde(rename = "type")]
    pub kind: BusKind,
    pub p_base_kw: f64,
    pub q_base_kvar: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub from: u32,
    pub to: u32,
    pub r_ohm: f64,
    pub x_ohm: f64,
}

/// Radial feeder with exactly one slack bus.
#[derive(Clone, Debug, PartialEq)]
pub struct PowerNetwork {
    base_mva: f64,
    base_kv: f64,
    buses: Vec<Bus>,
    lines: Vec<Line>,
    slack: usize,
    index: HashMap<u32, usize>,
}

impl PowerNetwork {
    pub fn new(base_mva: f64, base_kv: f64, buses: Vec<Bus>, lines: Vec<Line>) -> Result<Self> {
        if !(base_mva > 0.0 && base_mva.is_finite()) {
            return Err(Error::invalid("base_mva", format!("must be positive, got {base_mva}")));
        }
        if !(base_kv > 0.0 && base_kv.is_finite()) {
            return Err(Error::invalid("base_kv", format!("must be positive, got {base_kv}")));
        }
        let mut index = HashMap::with_capacity(buses.len());
        for (i, b) in buses.iter().enumerate() {
            if index.insert(b.id, i).is_some() {
                return Err(Error::invalid("bus.id", format!("duplicate bus id {}", b.id)));
            }
            if !(b.p_base_kw.is_finite() && b.q_base_kvar.is_finite()) {
                return Err(Error::invalid("bus.p_base_kw", format!("bus {} has a non-finite load", b.id)));
            }
        }
        let slacks: Vec<usize> = (0..buses.len()).filter(|&i| buses[i].kind == BusKind::Slack).collect();
        if slacks.len() != 1 {
            return Err(Error::invalid(
                "bus.type",
                format!("exactly one slack bus required, found {}", slacks.len()),
            ));
        }
        if lines.len() + 1 != buses.len() {
            return Err(Error::invalid(
                "lines",
                format!("radial feeder needs {} lines for {} buses, got {}", buses.len() - 1, buses.len(), lines.len()),
            ));
        }
        let mut parent: Vec<usize> = (0..buses.len()).collect();
        fn find(parent: &mut [usize], mut i: usize) -> usize {
            while parent[i] != i {
                parent[i] = parent[parent[i]];
                i = parent[i];
            }
            i
        }
        for l in &lines {
            for end in [l.from, l.to] {
                if !index.contains_key(&end) {
                    return Err(Error::DanglingReference {
                        entity: "bus",
                        id: end.to_string(),
                    });
                }
            }
            if !(l.r_ohm >= 0.0 && l.x_ohm >= 0.0 && l.r_ohm.is_finite() && l.x_ohm.is_finite()) {
                return Err(Error::invalid(
                    "line.r_ohm",
                    format!("line {}-{} needs finite non-negative r and x", l.from, l.to),
                ));
            }
            if l.r_ohm == 0.0 && l.x_ohm == 0.0 {
                return Err(Error::invalid("line.x_ohm", format!("line {}-{} has zero impedance", l.from, l.to)));
            }
            let (a, b) = (find(&mut parent, index[&l.from]), find(&mut parent, index[&l.to]));
            if a == b {
                return Err(Error::invalid("lines", format!("line {}-{} closes a loop", l.from, l.to)));
            }
            parent[a] = b;
        }
        Ok(PowerNetwork {
            base_mva,
            base_kv,
            buses,
            lines,
            slack: slacks[0],
            index,
        })
    }

    /// Loads `buses.csv` and `lines.csv` from `dir`. The bus table carries the
    /// per-unit bases in a leading comment such as `# base_mva = 10, base_kv = 12.66`.
    pub fn load(dir: &Path) -> Result<Self> {
        let bus_path = dir.join("buses.csv");
        let mut base_mva = None;
        let mut base_kv = None;
        for (k, v, line) in tables::header_pairs(&bus_path)? {
            let slot = match k.as_str() {
                "base_mva" => &mut base_mva,
                "base_kv" => &mut base_kv,
                _ => continue,
            };
            *slot = Some(v.parse::<f64>().map_err(|e| Error::Parse {
                path: bus_path.clone(),
                line,
                message: format!("{k}: {e}"),
            })?);
        }
        let missing = |key: &str| Error::Parse {
            path: bus_path.clone(),
            line: 1,
            message: format!("header comment must declare {key}"),
        };
        let base_mva = base_mva.ok_or_else(|| missing("base_mva"))?;
        let base_kv = base_kv.ok_or_else(|| missing("base_kv"))?;
        let buses = tables::read_rows(&bus_path)?;
        let lines = tables::read_rows(&dir.join("lines.csv"))?;
        Self::new(base_mva, base_kv, buses, lines).map_err(|e| e.context(format!("power network {}", dir.display())))
    }

    pub fn base_mva(&self) -> f64 {
        self.base_mva
    }

    pub fn base_kv(&self) -> f64 {
        self.base_kv
    }

    /// Impedance base in ohms.
    pub fn z_base(&self) -> f64 {
        self.base_kv * self.base_kv / self.base_mva
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    pub fn lines(&self) -> &[Line] {
        &self.lines
    }

    pub fn num_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn slack_index(&self) -> usize {
        self.slack
    }

    pub fn bus_index(&self, id: u32) -> Option<usize> {
        self.index.get(&id).copied()
    }

    /// Line endpoints as bus indices with per-unit `(r, x)`.
    pub fn lines_pu(&self) -> impl Iterator<Item = (usize, usize, f64, f64)> + '_ {
        let zb = self.z_base();
        self.lines
            .iter()
            .map(move |l| (self.index[&l.from], self.index[&l.to], l.r_ohm / zb, l.x_ohm / zb))
    }

    /// Copy with every base load multiplied by `factor`.
    pub fn scaled_loads(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for b in &mut out.buses {
            b.p_base_kw *= factor;
            b.q_base_kvar *= factor;
        }
        out
    }

    pub fn total_base_load_kw(&self) -> f64 {
        self.buses.iter().map(|b| b.p_base_kw).sum()
    }
}
