//! Scenario files: loading, validation and trip generation.

mod config;
mod trips;

use std::path::{Path, PathBuf};

pub use config::{
    BatteryParams, DemandSpec, DroopParams, OdMode, OdPair, PredictorConfig, RewardParams, ScenarioConfig,
    StationSpec, TrainConfig,
};
pub use trips::{generate_trips, TripPlan};

use crate::error::{Error, Result};
use crate::power::{BusKind, PowerNetwork};
use crate::traffic::RoadNetwork;

/// A charging station with its references resolved to indices.
#[derive(Clone, Debug, PartialEq)]
pub struct StationSite {
    pub id: u32,
    /// Road node index.
    pub node: usize,
    /// Bus index in the power network.
    pub bus: usize,
    pub piles: usize,
}

/// A validated config together with the networks it references.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub road: RoadNetwork,
    pub power: PowerNetwork,
    pub stations: Vec<StationSite>,
}

/// Parses and fully validates a scenario file.
pub fn load_scenario(path: &Path) -> Result<ScenarioConfig> {
    Scenario::load(path).map(|s| s.config)
}

/// Parses a scenario from TOML text; relative network paths are resolved
/// against `base_dir`.
pub fn parse_scenario(text: &str, base_dir: &Path, origin: &Path) -> Result<ScenarioConfig> {
    let mut cfg: ScenarioConfig = toml::from_str(text).map_err(|e| {
        let line = e
            .span()
            .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
            .unwrap_or(0);
        Error::Parse {
            path: origin.to_path_buf(),
            line,
            message: e.message().to_string(),
        }
    })?;
    cfg.road_net = resolve(base_dir, &cfg.road_net);
    cfg.power_net = resolve(base_dir, &cfg.power_net);
    Ok(cfg)
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// TOML rendering of a config; reloading it yields an equal config.
pub fn to_toml(cfg: &ScenarioConfig) -> Result<String> {
    toml::to_string(cfg).map_err(|e| Error::invalid("scenario", e.to_string()))
}

impl Scenario {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let cfg = parse_scenario(&text, base, path)?;
        Self::from_config(cfg)
    }

    pub fn from_config(config: ScenarioConfig) -> Result<Self> {
        config.validate()?;
        let road = RoadNetwork::load(&config.road_net)?;
        let power = PowerNetwork::load(&config.power_net)?;
        let mut stations = Vec::with_capacity(config.stations.len());
        for s in &config.stations {
            let node = road.node_index(s.node).ok_or_else(|| Error::DanglingReference {
                entity: "road node",
                id: s.node.to_string(),
            })?;
            let bus = power.bus_index(s.bus).ok_or_else(|| Error::DanglingReference {
                entity: "bus",
                id: s.bus.to_string(),
            })?;
            if power.buses()[bus].kind != BusKind::Pq {
                return Err(Error::invalid(
                    "charging_station.bus",
                    format!("station {} sits on bus {}, which is not a load bus", s.id, s.bus),
                ));
            }
            stations.push(StationSite {
                id: s.id,
                node,
                bus,
                piles: s.piles as usize,
            });
        }
        if let OdMode::Table { pairs } = &config.demand.od {
            for p in pairs {
                for n in [p.origin, p.destination] {
                    if road.node_index(n).is_none() {
                        return Err(Error::DanglingReference {
                            entity: "road node",
                            id: n.to_string(),
                        });
                    }
                }
            }
        }
        Ok(Scenario {
            config,
            road,
            power,
            stations,
        })
    }

    pub fn num_stations(&self) -> usize {
        self.stations.len()
    }
}
