//! Multi-robot route planning on corridor-dominated topological maps.
//!
//! Maps are directed graphs of narrow corridors ([`topomap`]), typically
//! generated as polytunnel layouts ([`mapgen`]). A [`fleet`] of robots is
//! routed by one of the [`planners`] at every planning instance of a lifelong
//! [`simulator`] run, and [`metrics`] turn the task log into efficiency and
//! throughput figures. [`sweep`] runs whole experiment grids.

pub mod baseplanner;
pub mod error;
pub mod fleet;
pub mod mapgen;
pub mod metrics;
pub mod planners;
pub mod simulator;
pub mod sweep;
pub mod topomap;

pub use error::{Error, Result};
pub use fleet::{Agent, Fleet, FleetConfig, Task};
pub use metrics::{SweepSummary, TrialResult};
pub use planners::{make_planner, Planner, PlannerConfig, PlannerKind};
pub use simulator::{run_trial, run_trial_on, MapSource, TrialConfig};
pub use sweep::{report, run_sweep, SweepSpec};
pub use topomap::{NodeId, Route, TopoMap};
