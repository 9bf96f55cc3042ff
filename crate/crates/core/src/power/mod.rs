//! Radial distribution feeder model and Newton-Raphson AC power flow.

mod linalg;
mod network;
mod solver;

pub use linalg::lu_solve;
pub use network::{Bus, BusKind, Line, PowerNetwork};
pub use solver::{
    average_voltage, bus_injections, power_mismatch, solve_power_flow, voltage_deviation, InjectionProfile, PfOptions,
    PfSolution,
};
