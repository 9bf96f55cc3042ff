use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{DemandSpec, OdMode};
use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::traffic::{distances_to, RoadNetwork, VehicleKind};

/// One vehicle's travel plan. Origin and destination are node indices.
#[derive(Clone, Debug, PartialEq)]
pub struct TripPlan {
    pub id: usize,
    pub depart_s: u64,
    pub origin: usize,
    pub destination: usize,
    pub kind: VehicleKind,
    /// Initial state of charge; 0 for conventional vehicles.
    pub soc_init: f64,
}

const STREAM_KIND: u64 = 11;
const STREAM_OD: u64 = 12;
const STREAM_SOC: u64 = 13;

/// Evenly spaced departures over `[0, horizon_s)`: trip `i` leaves at
/// `floor(i * 3600 / total_rate)`. Exactly `round(ev_fraction * N)` trips are
/// EVs, picked by a seeded shuffle.
pub fn generate_trips(spec: &DemandSpec, net: &RoadNetwork, horizon_s: u64, seed: u64) -> Result<Vec<TripPlan>> {
    if horizon_s == 0 {
        return Err(Error::invalid("horizon_s", "must be positive"));
    }
    let n = (spec.total_rate * horizon_s as f64 / 3600.0).round() as usize;
    let pairs = od_pairs(spec, net)?;
    let cumulative: Vec<f64> = pairs
        .iter()
        .scan(0.0, |acc, &(_, _, w)| {
            *acc += w;
            Some(*acc)
        })
        .collect();
    let total_w = *cumulative.last().expect("od_pairs is non-empty");

    let n_ev = ((spec.ev_fraction * n as f64).round() as usize).min(n);
    let mut is_ev = vec![false; n];
    is_ev[..n_ev].iter_mut().for_each(|x| *x = true);
    is_ev.shuffle(&mut stream_rng(seed, STREAM_KIND));

    let mut od_rng: ChaCha8Rng = stream_rng(seed, STREAM_OD);
    let mut soc_rng: ChaCha8Rng = stream_rng(seed, STREAM_SOC);
    let spacing = 3600.0 / spec.total_rate;
    Ok((0..n)
        .map(|i| {
            let u = od_rng.gen::<f64>() * total_w;
            let k = cumulative.partition_point(|&c| c <= u).min(pairs.len() - 1);
            let (origin, destination, _) = pairs[k];
            let (kind, soc_init) = if is_ev[i] {
                (VehicleKind::Ev, soc_rng.gen_range(spec.soc_init_low..=spec.soc_init_high))
            } else {
                (VehicleKind::Cv, 0.0)
            };
            TripPlan {
                id: i,
                depart_s: (i as f64 * spacing).floor() as u64,
                origin,
                destination,
                kind,
                soc_init,
            }
        })
        .collect())
}

fn od_pairs(spec: &DemandSpec, net: &RoadNetwork) -> Result<Vec<(usize, usize, f64)>> {
    let lengths = net.lengths();
    let n = net.nodes().len();
    let reach: Vec<Vec<f64>> = (0..n).map(|d| distances_to(net, &lengths, d)).collect();
    let reachable = |o: usize, d: usize| o != d && reach[d][o].is_finite();
    let pairs: Vec<(usize, usize, f64)> = match &spec.od {
        OdMode::Uniform => (0..n)
            .flat_map(|o| (0..n).map(move |d| (o, d, 1.0)))
            .filter(|&(o, d, _)| reachable(o, d))
            .collect(),
        OdMode::Table { pairs } => pairs
            .iter()
            .filter(|p| p.weight > 0.0)
            .filter_map(|p| Some((net.node_index(p.origin)?, net.node_index(p.destination)?, p.weight)))
            .filter(|&(o, d, _)| reachable(o, d))
            .collect(),
    };
    if pairs.is_empty() {
        return Err(Error::NoFeasibleOd);
    }
    Ok(pairs)
}
