use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{Link, RoadNetwork};
use crate::error::{Error, Result};

/// Speed floor in m/s that keeps a jammed link passable.
pub const V_MIN: f64 = 1.0;

/// Greenshields travel time `length / max(V_MIN, vf (1 - k / kjam))`, with
/// `k` clamped to `[0, kjam]`.
pub fn link_travel_time(link: &Link, density: f64) -> f64 {
    link.length_m / speed(link, density)
}

pub(crate) fn speed(link: &Link, density: f64) -> f64 {
    let k = density.clamp(0.0, link.kjam);
    (link.vf * (1.0 - k / link.kjam)).max(V_MIN)
}

#[derive(PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Cost of the cheapest path from every node index to `dest` under per-link
/// `weights` (reverse Dijkstra). Unreachable nodes get `f64::INFINITY`.
pub fn distances_to(net: &RoadNetwork, weights: &[f64], dest: usize) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; net.nodes().len()];
    let mut heap = BinaryHeap::new();
    dist[dest] = 0.0;
    heap.push(Entry(0.0, dest));
    while let Some(Entry(d, u)) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        for &l in net.in_links(u) {
            let (v, _) = net.link_ends(l);
            let nd = d + weights[l];
            if nd < dist[v] {
                dist[v] = nd;
                heap.push(Entry(nd, v));
            }
        }
    }
    dist
}

/// Minimum-cost link sequence between two node indices, with its cost.
///
/// Among equal-cost paths the one whose link-id sequence is lexicographically
/// smallest is returned: walking from the origin, the smallest-id outgoing
/// link that stays on some optimal path is taken at every node.
pub fn shortest_path(net: &RoadNetwork, weights: &[f64], origin: usize, dest: usize) -> Result<(Vec<usize>, f64)> {
    debug_assert_eq!(weights.len(), net.num_links());
    if let Some(bad) = weights.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(Error::invalid(
            "travel_time",
            format!("link {} has non-positive or non-finite weight", net.links()[bad].id),
        ));
    }
    let dist = distances_to(net, weights, dest);
    if !dist[origin].is_finite() {
        return Err(Error::Unreachable {
            from: net.nodes()[origin].id,
            to: net.nodes()[dest].id,
        });
    }
    let mut path = Vec::new();
    let mut node = origin;
    while node != dest {
        let here = dist[node];
        let tol = 1e-9 * here.max(1.0);
        let next = net
            .out_links(node)
            .iter()
            .copied()
            .find(|&l| {
                let (_, head) = net.link_ends(l);
                dist[head] < here && (weights[l] + dist[head] - here).abs() <= tol
            })
            .expect("an optimal successor exists on a finite shortest path");
        path.push(next);
        node = net.link_ends(next).1;
    }
    Ok((path, dist[origin]))
}
