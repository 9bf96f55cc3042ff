mod common;

use std::path::{Path, PathBuf};

use chargerec::scenario::{generate_trips, load_scenario, parse_scenario, to_toml, DemandSpec, OdMode, Scenario};
use chargerec::traffic::{RoadNetwork, VehicleKind};
use chargerec::Error;
use proptest::prelude::*;

fn nguyen_dupuis() -> RoadNetwork {
    RoadNetwork::load(&common::scenarios_dir().join("nguyen_dupuis")).unwrap()
}

fn minimal(stations: &str) -> String {
    let dir = common::scenarios_dir();
    format!(
        "seed = 1\nroad_net = {:?}\npower_net = {:?}\n\n[demand]\ntotal_rate = 120\nev_fraction = 0.5\n\n{stations}",
        dir.join("nguyen_dupuis").display().to_string(),
        dir.join("ieee33").display().to_string(),
    )
}

fn write(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("s.toml");
    std::fs::write(&path, text).unwrap();
    path
}

const ONE_CS: &str = "[[charging_station]]\nid = 1\nnode = 5\nbus = 5\npiles = 4\n";

fn demand(rate: f64, ev: f64) -> DemandSpec {
    DemandSpec {
        total_rate: rate,
        ev_fraction: ev,
        soc_init_low: 0.3,
        soc_init_high: 0.6,
        soc_target: 0.8,
        od: OdMode::Uniform,
    }
}

#[test]
fn minimal_file_fills_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = load_scenario(&write(tmp.path(), &minimal(ONE_CS))).unwrap();
    assert_eq!(cfg.stations.len(), 1);
    assert_eq!(cfg.stations[0].bus, 5);
    assert!((cfg.droop.p_min_kw() - 15.0).abs() < 1e-12);
    assert!((cfg.droop.alpha() - 700.0).abs() < 1e-9);
    assert_eq!(cfg.battery.capacity_kwh, 24.0);
    assert_eq!(cfg.battery.eta, 0.9);
    assert_eq!(cfg.demand.soc_target, 0.8);
}

#[test]
fn missing_bus_is_a_dangling_reference() {
    let tmp = tempfile::tempdir().unwrap();
    let text = minimal("[[charging_station]]\nid = 1\nnode = 5\nbus = 99\npiles = 4\n");
    match Scenario::load(write(tmp.path(), &text)) {
        Err(Error::DanglingReference { entity, id }) => {
            assert_eq!(entity, "bus");
            assert_eq!(id, "99");
        }
        other => panic!("expected dangling reference, got {other:?}"),
    }
}

#[test]
fn missing_road_node_is_a_dangling_reference() {
    let tmp = tempfile::tempdir().unwrap();
    let text = minimal("[[charging_station]]\nid = 1\nnode = 77\nbus = 5\npiles = 4\n");
    assert!(matches!(
        Scenario::load(write(tmp.path(), &text)),
        Err(Error::DanglingReference { entity: "road node", .. })
    ));
}

#[test]
fn station_on_slack_bus_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let text = minimal("[[charging_station]]\nid = 1\nnode = 5\nbus = 1\npiles = 4\n");
    match Scenario::load(write(tmp.path(), &text)) {
        Err(Error::InvalidField { field, .. }) => assert_eq!(field, "charging_station.bus"),
        other => panic!("expected invalid field, got {other:?}"),
    }
}

#[test]
fn parse_error_reports_line() {
    let text = "seed = 1\nroad_net = \"a\"\npower_net = \"b\"\n[demand]\ntotal_rate = oops\n";
    match parse_scenario(text, Path::new("."), Path::new("bad.toml")) {
        Err(Error::Parse { line, path, .. }) => {
            assert_eq!(line, 5);
            assert_eq!(path, Path::new("bad.toml"));
        }
        other => panic!("expected parse error, got {other:?}"),
    }
}

#[test]
fn invariant_violations_name_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        ("controller_interval_s = 700\n", "controller_interval_s"),
        ("warmup_s = 0\n", "warmup_s"),
    ];
    for (prefix, field) in cases {
        let text = format!("{prefix}{}", minimal(ONE_CS));
        match Scenario::load(write(tmp.path(), &text)) {
            Err(Error::InvalidField { field: f, .. }) => assert_eq!(f, field),
            other => panic!("expected invalid {field}, got {other:?}"),
        }
    }
    let zero_piles = minimal("[[charging_station]]\nid = 1\nnode = 5\nbus = 5\npiles = 0\n");
    assert!(matches!(
        Scenario::load(write(tmp.path(), &zero_piles)),
        Err(Error::InvalidField { field, .. }) if field == "charging_station.piles"
    ));
    let dup = minimal(&format!("{ONE_CS}\n{ONE_CS}"));
    assert!(matches!(
        Scenario::load(write(tmp.path(), &dup)),
        Err(Error::InvalidField { field, .. }) if field == "charging_station.id"
    ));
    let bad_soc = minimal(ONE_CS).replace("ev_fraction = 0.5", "ev_fraction = 0.5\nsoc_init_low = 0.7");
    assert!(matches!(
        Scenario::load(write(tmp.path(), &bad_soc)),
        Err(Error::InvalidField { field, .. }) if field == "demand.soc_init_low"
    ));
}

#[test]
fn bundled_case_matches_published_layout() {
    let sc = Scenario::load(common::scenarios_dir().join("case_a.toml")).unwrap();
    assert_eq!(sc.num_stations(), 5);
    assert!(sc.stations.iter().all(|s| s.piles == 60));
    assert_eq!(sc.config.demand.total_rate, 600.0);
    assert_eq!(sc.config.demand.ev_fraction, 0.5);
    assert_eq!(sc.road.num_links(), 38);
    assert_eq!(sc.power.buses().len(), 33);
}

#[test]
fn reduced_case_loads() {
    let sc = Scenario::load(common::scenarios_dir().join("reduced.toml")).unwrap();
    assert_eq!(sc.num_stations(), 2);
    assert_eq!(sc.config.demand.total_rate, 120.0);
}

#[test]
fn toml_round_trip_is_identity() {
    for name in ["case_a.toml", "reduced.toml"] {
        let cfg = load_scenario(&common::scenarios_dir().join(name)).unwrap();
        let text = to_toml(&cfg).unwrap();
        let back = parse_scenario(&text, Path::new("/"), Path::new("rt.toml")).unwrap();
        assert_eq!(back, cfg, "{name}");
    }
}

#[test]
fn six_hundred_per_hour_is_six_second_spacing() {
    let trips = generate_trips(&demand(600.0, 0.5), &nguyen_dupuis(), 3600, 7).unwrap();
    assert_eq!(trips.len(), 600);
    for (i, t) in trips.iter().enumerate() {
        assert_eq!(t.depart_s, 6 * i as u64);
        assert_eq!(t.id, i);
    }
    assert_eq!(trips.iter().filter(|t| t.kind == VehicleKind::Ev).count(), 300);
}

#[test]
fn zero_ev_fraction_gives_only_cvs() {
    let trips = generate_trips(&demand(600.0, 0.0), &nguyen_dupuis(), 3600, 7).unwrap();
    assert!(trips.iter().all(|t| t.kind == VehicleKind::Cv && t.soc_init == 0.0));
}

#[test]
fn same_seed_same_trips() {
    let net = nguyen_dupuis();
    let a = generate_trips(&demand(600.0, 0.5), &net, 3600, 3).unwrap();
    let b = generate_trips(&demand(600.0, 0.5), &net, 3600, 3).unwrap();
    let c = generate_trips(&demand(600.0, 0.5), &net, 3600, 4).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn disconnected_network_has_no_feasible_od() {
    use chargerec::traffic::{Link, Node};
    let nodes = (1..=3).map(|id| Node { id, x: id as f64, y: 0.0 }).collect();
    let links = vec![Link {
        id: 1,
        from: 1,
        to: 2,
        length_m: 100.0,
        lanes: 1,
        vf: 10.0,
        kjam: 0.1,
    }];
    let net = RoadNetwork::new(nodes, links).unwrap();
    // Only 1 -> 2 is reachable, so uniform OD still has one pair.
    let trips = generate_trips(&demand(60.0, 0.5), &net, 600, 0).unwrap();
    assert!(trips.iter().all(|t| (t.origin, t.destination) == (0, 1)));

    let isolated = RoadNetwork::new((1..=2).map(|id| Node { id, x: 0.0, y: 0.0 }).collect(), vec![]).unwrap();
    assert!(matches!(generate_trips(&demand(60.0, 0.5), &isolated, 600, 0), Err(Error::NoFeasibleOd)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn trip_counts_and_soc_ranges(
        rate in 10.0f64..900.0,
        ev in 0.0f64..=1.0,
        horizon in 60u64..5400,
        lo in 0.0f64..0.5,
        width in 0.01f64..0.3,
        seed in any::<u64>(),
    ) {
        let spec = DemandSpec { soc_init_low: lo, soc_init_high: lo + width, ..demand(rate, ev) };
        let trips = generate_trips(&spec, &nguyen_dupuis(), horizon, seed).unwrap();
        let n = (rate * horizon as f64 / 3600.0).round() as usize;
        prop_assert_eq!(trips.len(), n);
        let evs: Vec<_> = trips.iter().filter(|t| t.kind == VehicleKind::Ev).collect();
        prop_assert_eq!(evs.len(), (ev * n as f64).round() as usize);
        for t in &evs {
            prop_assert!(t.soc_init >= lo && t.soc_init <= lo + width);
        }
        for w in trips.windows(2) {
            prop_assert!(w[0].depart_s <= w[1].depart_s);
        }
        for t in &trips {
            prop_assert!(t.origin != t.destination);
            prop_assert!(t.depart_s < horizon);
        }
    }
}
