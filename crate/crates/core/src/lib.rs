//! Simulation and dispatch core for PV-rich unbalanced distribution feeders.
//!
//! The crate models a radial feeder, solves its power flow, builds
//! voltage-reactive-power sensitivity matrices by perturbation, and runs the
//! coordinated reactive dispatch loop that mitigates over-voltage without
//! touching active power. A hosting-capacity harness reproduces the
//! incremental PV-addition protocol under competing inverter control modes.

pub mod coordinator;
pub mod harness;
pub mod inverter;
pub mod lp;
pub mod model;
pub mod powerflow;
pub mod profiles;
pub mod report;
pub mod scenario;
pub mod sensitivity;

pub use model::{NetworkModel, NetworkParts};
pub use powerflow::{InjectionState, SolverOptions, VoltageBand, VoltageSolution};
