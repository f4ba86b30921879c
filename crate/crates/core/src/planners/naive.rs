use super::{PlanReport, Planner, PlannerKind};
use crate::baseplanner::{get_groups, route_for_active, MapMode, RouteOutcome};
use crate::error::Result;
use crate::fleet::{BlockingSet, Fleet};
use crate::topomap::TopoMap;

/// Every agent takes its individually optimal route; other robots are ignored.
#[derive(Debug, Clone, Copy, Default)]
pub struct NaivePlanner;

impl Planner for NaivePlanner {
    fn kind(&self) -> PlannerKind {
        PlannerKind::Naive
    }

    fn find_routes(&mut self, map: &TopoMap, fleet: &mut Fleet, _now: f64) -> Result<PlanReport> {
        let groups = get_groups(fleet);
        let empty = BlockingSet::empty(map.node_count());
        let mut report = PlanReport::default();
        for a in groups.new_active.into_iter().chain(groups.active) {
            match route_for_active(map, fleet, a, MapMode::Filtered, &empty) {
                RouteOutcome::Routed => report.routed += 1,
                RouteOutcome::Inactive => report.inactive += 1,
            }
        }
        Ok(report)
    }
}
