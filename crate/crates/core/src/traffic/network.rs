use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tables;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: u32,
    pub x: f64,
    pub y: f64,
}

/// Directed road link in SI units.
#[derive(Clone, Debug, PartialEq)]
pub struct Link {
    pub id: u32,
    pub from: u32,
    pub to: u32,
    pub length_m: f64,
    pub lanes: u32,
    /// Free-flow speed, m/s.
    pub vf: f64,
    /// Jam density, veh/m/lane.
    pub kjam: f64,
}

#[derive(Deserialize)]
struct LinkRow {
    id: u32,
    from: u32,
    to: u32,
    length_m: f64,
    lanes: u32,
    vf_kmh: f64,
    kjam_per_km: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoadNetwork {
    nodes: Vec<Node>,
    links: Vec<Link>,
    node_index: HashMap<u32, usize>,
    link_index: HashMap<u32, usize>,
    /// Outgoing link indices per node index, sorted by link id.
    out_links: Vec<Vec<usize>>,
    in_links: Vec<Vec<usize>>,
}

impl RoadNetwork {
    pub fn new(nodes: Vec<Node>, links: Vec<Link>) -> Result<Self> {
        let mut node_index = HashMap::new();
        for (i, n) in nodes.iter().enumerate() {
            if node_index.insert(n.id, i).is_some() {
                return Err(Error::invalid("node.id", format!("duplicate node id {}", n.id)));
            }
            if !(n.x.is_finite() && n.y.is_finite()) {
                return Err(Error::invalid("node.x", format!("node {} has non-finite coordinates", n.id)));
            }
        }
        let mut link_index = HashMap::new();
        let mut out_links = vec![Vec::new(); nodes.len()];
        let mut in_links = vec![Vec::new(); nodes.len()];
        for (i, l) in links.iter().enumerate() {
            if link_index.insert(l.id, i).is_some() {
                return Err(Error::invalid("link.id", format!("duplicate link id {}", l.id)));
            }
            let positive = |v: f64| v > 0.0 && v.is_finite();
            if !positive(l.length_m) {
                return Err(Error::invalid("link.length_m", format!("link {} must be positive", l.id)));
            }
            if !positive(l.vf) {
                return Err(Error::invalid("link.vf_kmh", format!("link {} must be positive", l.id)));
            }
            if !positive(l.kjam) {
                return Err(Error::invalid("link.kjam_per_km", format!("link {} must be positive", l.id)));
            }
            if l.lanes == 0 {
                return Err(Error::invalid("link.lanes", format!("link {} needs at least one lane", l.id)));
            }
            let from = *node_index.get(&l.from).ok_or_else(|| Error::DanglingReference {
                entity: "node",
                id: l.from.to_string(),
            })?;
            let to = *node_index.get(&l.to).ok_or_else(|| Error::DanglingReference {
                entity: "node",
                id: l.to.to_string(),
            })?;
            out_links[from].push(i);
            in_links[to].push(i);
        }
        for v in out_links.iter_mut().chain(in_links.iter_mut()) {
            v.sort_by_key(|&i| links[i].id);
        }
        Ok(RoadNetwork {
            nodes,
            links,
            node_index,
            link_index,
            out_links,
            in_links,
        })
    }

    /// Loads `nodes.csv` (id, x, y) and `links.csv` (id, from, to, length_m,
    /// lanes, vf_kmh, kjam_per_km) from `dir`.
    pub fn load(dir: &Path) -> Result<Self> {
        let nodes: Vec<Node> = tables::read_rows(&dir.join("nodes.csv"))?;
        let rows: Vec<LinkRow> = tables::read_rows(&dir.join("links.csv"))?;
        let links = rows
            .into_iter()
            .map(|r| Link {
                id: r.id,
                from: r.from,
                to: r.to,
                length_m: r.length_m,
                lanes: r.lanes,
                vf: r.vf_kmh / 3.6,
                kjam: r.kjam_per_km / 1000.0,
            })
            .collect();
        Self::new(nodes, links).map_err(|e| e.context(format!("road network {}", dir.display())))
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn num_links(&self) -> usize {
        self.links.len()
    }

    pub fn node_index(&self, id: u32) -> Option<usize> {
        self.node_index.get(&id).copied()
    }

    pub fn link_index(&self, id: u32) -> Option<usize> {
        self.link_index.get(&id).copied()
    }

    pub fn out_links(&self, node: usize) -> &[usize] {
        &self.out_links[node]
    }

    pub fn in_links(&self, node: usize) -> &[usize] {
        &self.in_links[node]
    }

    /// Node index at the tail / head of link index `l`.
    pub fn link_ends(&self, l: usize) -> (usize, usize) {
        let link = &self.links[l];
        (self.node_index[&link.from], self.node_index[&link.to])
    }

    pub fn free_flow_times(&self) -> Vec<f64> {
        self.links.iter().map(|l| l.length_m / l.vf).collect()
    }

    pub fn lengths(&self) -> Vec<f64> {
        self.links.iter().map(|l| l.length_m).collect()
    }

    /// Node coordinates scaled to `[0, 1]` per axis over the network extent.
    pub fn normalized_coords(&self, node: usize) -> (f64, f64) {
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for n in &self.nodes {
            x0 = x0.min(n.x);
            x1 = x1.max(n.x);
            y0 = y0.min(n.y);
            y1 = y1.max(n.y);
        }
        let scale = |v: f64, lo: f64, hi: f64| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 };
        let n = &self.nodes[node];
        (scale(n.x, x0, x1), scale(n.y, y0, y1))
    }
}
