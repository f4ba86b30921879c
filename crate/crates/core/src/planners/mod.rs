//! Fleet planners behind one interface.
//!
//! | planner | conflict trigger | temporal model | ordering scope | responses |
//! |---|---|---|---|---|
//! | naive | none | none | none | waiting only |
//! | pp | none | none | global, agent level | waiting only |
//! | pbs | during planning, on conflict | space-time expanded | global, agent-centric | priority constraint search |
//! | fp:space_only | during planning, on contention | timeless | local, per contested node | waiting, partial route execution, spatial deferral |
//! | fp:space_time | during planning, on contention | time-aware | local, per contested node | waiting, partial route execution, spatial deferral |

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baseplanner::HeuristicKind;
use crate::error::{Error, Result};
use crate::fleet::Fleet;
use crate::topomap::TopoMap;

pub mod fragment;
pub mod naive;
pub mod pbs;
pub mod prioritised;

pub use fragment::{
    fp_assign_fragments, fp_build_route_fragments, fp_get_critical_points, CriticalPointIndex, FragmentAssignment,
    FragmentPlanner, FpVariant, RouteFragments,
};
pub use naive::NaivePlanner;
pub use pbs::{pbs_get_conflicts, PbsPlanner, PbsRuleset, SpaceTimeConflict};
pub use prioritised::PrioritisedPlanner;

pub const DEFAULT_PBS_MAX_ATTEMPTS: usize = 50;
pub const DEFAULT_PBS_WINDOW_S: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum PlannerKind {
    Naive,
    Pp(HeuristicKind),
    Pbs,
    Fp(FpVariant),
}

impl PlannerKind {
    /// The seven planner configurations of the full experimental grid.
    pub fn all() -> Vec<PlannerKind> {
        vec![
            PlannerKind::Naive,
            PlannerKind::Pp(HeuristicKind::Name),
            PlannerKind::Pp(HeuristicKind::ClosestFirst),
            PlannerKind::Pp(HeuristicKind::TimeSinceTaskStart),
            PlannerKind::Pbs,
            PlannerKind::Fp(FpVariant::SpaceOnly),
            PlannerKind::Fp(FpVariant::SpaceTime),
        ]
    }

    pub fn is_naive(&self) -> bool {
        matches!(self, PlannerKind::Naive)
    }

    pub fn is_fragment(&self) -> bool {
        matches!(self, PlannerKind::Fp(_))
    }
}

impl fmt::Display for PlannerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlannerKind::Naive => f.write_str("naive"),
            PlannerKind::Pp(h) => write!(f, "pp:{h}"),
            PlannerKind::Pbs => f.write_str("pbs"),
            PlannerKind::Fp(FpVariant::SpaceOnly) => f.write_str("fp:space_only"),
            PlannerKind::Fp(FpVariant::SpaceTime) => f.write_str("fp:space_time"),
        }
    }
}

impl FromStr for PlannerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "naive" => PlannerKind::Naive,
            "pbs" => PlannerKind::Pbs,
            "fp:space_only" => PlannerKind::Fp(FpVariant::SpaceOnly),
            "fp:space_time" => PlannerKind::Fp(FpVariant::SpaceTime),
            _ => match s.strip_prefix("pp:").map(str::parse::<HeuristicKind>) {
                Some(Ok(h @ (HeuristicKind::Name | HeuristicKind::ClosestFirst | HeuristicKind::TimeSinceTaskStart))) => {
                    PlannerKind::Pp(h)
                }
                _ => return Err(Error::Config(format!("unknown planner {s:?}"))),
            },
        })
    }
}

impl TryFrom<String> for PlannerKind {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<PlannerKind> for String {
    fn from(k: PlannerKind) -> String {
        k.to_string()
    }
}

/// Knobs that only some planners read.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlannerConfig {
    pub pbs_max_attempts: usize,
    pub pbs_window_s: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig { pbs_max_attempts: DEFAULT_PBS_MAX_ATTEMPTS, pbs_window_s: DEFAULT_PBS_WINDOW_S }
    }
}

/// Per-instance diagnostics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlanReport {
    pub routed: usize,
    pub inactive: usize,
    pub pbs_attempts: usize,
    /// PBS stopped on an attempt with no conflicts and no failures.
    pub pbs_accepted: bool,
    /// Agents stopped because the best PBS attempt still had conflicts.
    pub pbs_deactivated: usize,
}

pub trait Planner: Send {
    fn kind(&self) -> PlannerKind;

    /// One planning instance over the whole fleet. `now` is the simulated
    /// time, used by planners that reason about arrival times.
    fn find_routes(&mut self, map: &TopoMap, fleet: &mut Fleet, now: f64) -> Result<PlanReport>;
}

pub fn make_planner(kind: PlannerKind, config: &PlannerConfig) -> Result<Box<dyn Planner>> {
    Ok(match kind {
        PlannerKind::Naive => Box::new(NaivePlanner),
        PlannerKind::Pp(h) => Box::new(PrioritisedPlanner::new(h)?),
        PlannerKind::Pbs => Box::new(PbsPlanner::new(config.pbs_max_attempts, config.pbs_window_s)?),
        PlannerKind::Fp(v) => Box::new(FragmentPlanner::new(v)),
    })
}
