use super::{PlanReport, Planner, PlannerKind};
use crate::baseplanner::{get_groups, get_priorities, route_for_active, HeuristicKind, MapMode, PriorityHeuristic, RouteOutcome};
use crate::error::Result;
use crate::fleet::{occupied_nodes_except, Fleet, Occupancy};
use crate::topomap::TopoMap;

/// Classic prioritised planning: a global order, and each agent routes around
/// the positions and routes of everyone else. Agents planned later see the
/// fresh routes of those planned earlier and the standing routes of the rest,
/// so installed routes never share a node.
#[derive(Debug, Clone)]
pub struct PrioritisedPlanner {
    heuristic: PriorityHeuristic,
}

impl PrioritisedPlanner {
    pub fn new(kind: HeuristicKind) -> Result<Self> {
        Ok(PrioritisedPlanner { heuristic: PriorityHeuristic::global(kind)? })
    }
}

impl Planner for PrioritisedPlanner {
    fn kind(&self) -> PlannerKind {
        PlannerKind::Pp(self.heuristic.kind)
    }

    fn find_routes(&mut self, map: &TopoMap, fleet: &mut Fleet, _now: f64) -> Result<PlanReport> {
        let groups = get_groups(fleet);
        let mut everyone: Vec<usize> =
            groups.new_active.iter().chain(&groups.active).chain(&groups.inactive).copied().collect();
        everyone.sort_unstable();
        let order = get_priorities(map, fleet, &everyone, &self.heuristic);
        let mut report = PlanReport::default();
        for a in order.0 {
            let blocking = occupied_nodes_except(fleet, map.node_count(), Occupancy::Route, Some(a));
            match route_for_active(map, fleet, a, MapMode::Filtered, &blocking) {
                RouteOutcome::Routed => report.routed += 1,
                RouteOutcome::Inactive => report.inactive += 1,
            }
        }
        Ok(report)
    }
}
