//! Machinery shared by every planner: lifecycle grouping, the per-agent
//! routing workflow, routing checks and the priority heuristics.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::fleet::{empty_graph_route, AgentGroups, BlockingSet, Fleet};
use crate::topomap::{route_distance, shortest_route_ix, NodeIx, SearchFilter, TopoMap, Weight};

/// Guards the division in the time-to-node score.
pub const SPEED_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HeuristicKind {
    Name,
    TimeSinceTaskStart,
    ClosestFirst,
    DistanceToNode,
    TimeToNode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PriorityHeuristic {
    pub kind: HeuristicKind,
    pub target: Option<NodeIx>,
}

impl PriorityHeuristic {
    pub fn global(kind: HeuristicKind) -> Result<Self> {
        match kind {
            HeuristicKind::DistanceToNode | HeuristicKind::TimeToNode => {
                Err(Error::Config("node-relative heuristics need a target node".into()))
            }
            _ => Ok(PriorityHeuristic { kind, target: None }),
        }
    }

    pub fn to_node(kind: HeuristicKind, target: NodeIx) -> Result<Self> {
        match kind {
            HeuristicKind::DistanceToNode | HeuristicKind::TimeToNode => Ok(PriorityHeuristic { kind, target: Some(target) }),
            _ => Err(Error::Config("only node-relative heuristics take a target node".into())),
        }
    }
}

impl HeuristicKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            HeuristicKind::Name => "name",
            HeuristicKind::TimeSinceTaskStart => "task_start_time",
            HeuristicKind::ClosestFirst => "shortest_route",
            HeuristicKind::DistanceToNode => "distance_to_node",
            HeuristicKind::TimeToNode => "time_to_node",
        }
    }
}

impl fmt::Display for HeuristicKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for HeuristicKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "name" => HeuristicKind::Name,
            "task_start_time" => HeuristicKind::TimeSinceTaskStart,
            "shortest_route" => HeuristicKind::ClosestFirst,
            "distance_to_node" => HeuristicKind::DistanceToNode,
            "time_to_node" => HeuristicKind::TimeToNode,
            other => return Err(Error::Config(format!("unknown heuristic {other:?}"))),
        })
    }
}

/// Agent indices, highest priority first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PriorityOrder(pub Vec<usize>);

impl PriorityOrder {
    pub fn head(&self) -> Option<usize> {
        self.0.first().copied()
    }
}

/// Splits the fleet into newly eligible, active and inactive agents.
///
/// An agent holding a goal without an installed route (fresh task, or its last
/// routing attempt failed) is newly eligible; one holding a goal and a
/// non-empty route is active; everything else is inactive.
pub fn get_groups(fleet: &Fleet) -> AgentGroups {
    let mut groups = AgentGroups::default();
    for (i, a) in fleet.agents.iter().enumerate() {
        if a.goal.is_some() && !a.route_issued {
            groups.new_active.push(i);
        } else if a.goal.is_some() && !a.route.is_empty() {
            groups.active.push(i);
        } else {
            groups.inactive.push(i);
        }
    }
    groups
}

pub fn allow_routing(map: &TopoMap, s: Option<NodeIx>, g: Option<NodeIx>) -> bool {
    let (Some(s), Some(g)) = (s, g) else {
        return false;
    };
    s != g && s < map.node_count() && g < map.node_count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapMode {
    /// Permissible sub-graph minus the blocking set.
    Filtered,
    /// Permissible sub-graph only.
    Open,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RouteOutcome {
    Routed,
    Inactive,
}

/// Replans one agent from its next attainable node to its goal.
///
/// Only the agent's own start is exempt from the blocking set. A blocked goal
/// (another robot standing on it or holding it on a route) makes the agent
/// inactive for this instance.
pub fn route_for_active(map: &TopoMap, fleet: &mut Fleet, agent: usize, mode: MapMode, blocking: &BlockingSet) -> RouteOutcome {
    let a = &mut fleet.agents[agent];
    a.clear_route();
    let s = a.next_node();
    let g = a.goal;
    if !allow_routing(map, Some(s), g) {
        a.route_issued = false;
        return RouteOutcome::Inactive;
    }
    let g = g.unwrap();
    let blocked = match mode {
        MapMode::Filtered => {
            if blocking.contains(g) {
                a.route_issued = false;
                return RouteOutcome::Inactive;
            }
            Some(blocking.as_mask())
        }
        MapMode::Open => None,
    };
    let filter = SearchFilter { footprint: Some(a.footprint), blocked };
    match shortest_route_ix(map, s, g, Weight::Distance, &filter) {
        Some(route) => {
            a.install_route(route);
            RouteOutcome::Routed
        }
        None => {
            a.route_issued = false;
            RouteOutcome::Inactive
        }
    }
}

/// Distance along the agent's route from its current position to the first
/// occurrence of `v`, including what is left of an edge in progress.
/// `+inf` when `v` is not ahead of the agent.
pub fn route_prefix_distance(map: &TopoMap, fleet: &Fleet, agent: usize, v: NodeIx) -> f64 {
    let a = &fleet.agents[agent];
    let lead = a.edge_progress.map_or(0.0, |p| p.remaining());
    if v == a.next_node() {
        return lead;
    }
    let nodes = &a.route.nodes;
    let Some(pos) = nodes.iter().position(|&n| n == v) else {
        return f64::INFINITY;
    };
    let mut d = lead;
    for w in nodes[..=pos].windows(2) {
        match map.edge_between(w[0], w[1]) {
            Some(e) => d += map.edge(e).length,
            None => return f64::INFINITY,
        }
    }
    d
}

fn score(map: &TopoMap, fleet: &Fleet, agent: usize, rank: usize, h: &PriorityHeuristic) -> f64 {
    let a = &fleet.agents[agent];
    match h.kind {
        HeuristicKind::Name => rank as f64,
        HeuristicKind::TimeSinceTaskStart => {
            if a.goal.is_some() {
                a.task_start_time
            } else {
                f64::INFINITY
            }
        }
        HeuristicKind::ClosestFirst => {
            let Some(g) = a.goal else { return f64::INFINITY };
            let lead = a.edge_progress.map_or(0.0, |p| p.remaining());
            empty_graph_route(map, a.footprint, a.next_node(), g)
                .and_then(|r| route_distance(map, &r).ok())
                .map_or(f64::INFINITY, |d| lead + d)
        }
        HeuristicKind::DistanceToNode => h.target.map_or(f64::INFINITY, |v| route_prefix_distance(map, fleet, agent, v)),
        HeuristicKind::TimeToNode => h.target.map_or(f64::INFINITY, |v| {
            route_prefix_distance(map, fleet, agent, v) / a.nominal_speed.max(SPEED_EPSILON)
        }),
    }
}

/// Orders `agents` by ascending heuristic score; ties go to the smaller id.
pub fn get_priorities(map: &TopoMap, fleet: &Fleet, agents: &[usize], h: &PriorityHeuristic) -> PriorityOrder {
    let mut sorted: Vec<usize> = agents.to_vec();
    // fleet indices follow id order, so index order is name order
    sorted.sort_unstable();
    sorted.dedup();
    let mut scored: Vec<(f64, usize)> =
        sorted.iter().enumerate().map(|(rank, &i)| (score(map, fleet, i, rank, h), i)).collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    PriorityOrder(scored.into_iter().map(|(_, i)| i).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fleet::{Agent, EdgeProgress};
    use crate::topomap::{Route, TopoEdge, TopoNode};

    /// Bidirectional line A-B-C-D with lengths 2, 3, 4.
    fn line() -> TopoMap {
        let ids = ["A", "B", "C", "D"];
        let nodes = ids.iter().map(|i| TopoNode { id: (*i).into(), x: 0.0, y: 0.0 }).collect();
        let mut edges = Vec::new();
        for (w, l) in ids.windows(2).zip([2.0, 3.0, 4.0]) {
            for (f, t) in [(w[0], w[1]), (w[1], w[0])] {
                edges.push(TopoEdge { from: f.into(), to: t.into(), length: l, speed_limit: 1.0, envelope: 1.0 });
            }
        }
        TopoMap::new("l", nodes, edges).unwrap()
    }

    #[test]
    fn groups_by_lifecycle() {
        let mut fresh = Agent::new("a", 1.0, 0.5, 0);
        fresh.goal = Some(2);
        let mut moving = Agent::new("b", 1.0, 0.5, 1);
        moving.goal = Some(3);
        moving.install_route(Route::new(vec![1, 2, 3]));
        let idle = Agent::new("c", 1.0, 0.5, 3);
        let fleet = Fleet::new(vec![fresh, moving, idle]).unwrap();
        let g = get_groups(&fleet);
        assert_eq!(g.new_active, vec![0]);
        assert_eq!(g.active, vec![1]);
        assert_eq!(g.inactive, vec![2]);
        assert_eq!(get_groups(&fleet), g);
    }

    #[test]
    fn routing_checks() {
        let m = line();
        assert!(!allow_routing(&m, Some(0), None));
        assert!(!allow_routing(&m, Some(1), Some(1)));
        assert!(!allow_routing(&m, Some(0), Some(99)));
        assert!(allow_routing(&m, Some(0), Some(3)));
    }

    #[test]
    fn route_for_active_cases() {
        let m = line();
        let mut a = Agent::new("a", 1.0, 0.5, 0);
        a.goal = Some(3);
        let mut fleet = Fleet::new(vec![a]).unwrap();
        let empty = BlockingSet::empty(4);
        assert_eq!(route_for_active(&m, &mut fleet, 0, MapMode::Filtered, &empty), RouteOutcome::Routed);
        assert_eq!(fleet.agents[0].route.nodes, vec![0, 1, 2, 3]);

        let mut blocked = BlockingSet::empty(4);
        blocked.insert(2);
        assert_eq!(route_for_active(&m, &mut fleet, 0, MapMode::Filtered, &blocked), RouteOutcome::Inactive);
        assert!(fleet.agents[0].route.is_empty());
        assert_eq!(route_for_active(&m, &mut fleet, 0, MapMode::Open, &blocked), RouteOutcome::Routed);

        fleet.agents[0].goal = Some(0);
        assert_eq!(route_for_active(&m, &mut fleet, 0, MapMode::Filtered, &empty), RouteOutcome::Inactive);
    }

    #[test]
    fn prefix_distance() {
        let m = line();
        let mut a = Agent::new("a", 1.0, 0.5, 0);
        a.install_route(Route::new(vec![0, 1, 2]));
        let fleet = Fleet::new(vec![a]).unwrap();
        assert_eq!(route_prefix_distance(&m, &fleet, 0, 2), 5.0);
        assert_eq!(route_prefix_distance(&m, &fleet, 0, 0), 0.0);
        assert_eq!(route_prefix_distance(&m, &fleet, 0, 3), f64::INFINITY);

        let mut b = Agent::new("b", 1.0, 0.5, 0);
        b.edge_progress =
            Some(EdgeProgress { edge: m.edge_between(0, 1).unwrap(), from: 0, to: 1, length: 2.0, travelled: 0.5 });
        b.install_route(Route::new(vec![1, 2]));
        let fleet = Fleet::new(vec![b]).unwrap();
        assert_eq!(route_prefix_distance(&m, &fleet, 0, 1), 1.5);
        assert_eq!(route_prefix_distance(&m, &fleet, 0, 2), 4.5);
    }

    #[test]
    fn name_and_distance_orders() {
        let m = line();
        let fleet = Fleet::new(vec![
            Agent::new("b", 1.0, 0.5, 0),
            Agent::new("a", 1.0, 0.5, 1),
            Agent::new("c", 1.0, 0.5, 2),
        ])
        .unwrap();
        let h = PriorityHeuristic::global(HeuristicKind::Name).unwrap();
        let ids = |o: PriorityOrder| o.0.iter().map(|&i| fleet.agents[i].id.clone()).collect::<Vec<_>>();
        assert_eq!(ids(get_priorities(&m, &fleet, &[2, 0, 1], &h)), vec!["a", "b", "c"]);
    }

    /// Two agents on a 4-node line heading to D with prefix distances 10 and 20
    /// (edge lengths scaled); speeds 1 and 4 give times 10 and 5.
    fn racing_pair(speed_a: f64, speed_b: f64) -> (TopoMap, Fleet) {
        let ids = ["A", "B", "C", "D", "E"];
        let nodes = ids.iter().map(|i| TopoNode { id: (*i).into(), x: 0.0, y: 0.0 }).collect();
        let mut edges = Vec::new();
        for (f, t, l) in [("A", "D", 10.0), ("B", "C", 15.0), ("C", "D", 5.0), ("D", "E", 1.0)] {
            edges.push(TopoEdge { from: f.into(), to: t.into(), length: l, speed_limit: 10.0, envelope: 1.0 });
        }
        let m = TopoMap::new("r", nodes, edges).unwrap();
        let mut a = Agent::new("a", speed_a, 0.5, 0);
        a.install_route(Route::new(vec![0, 3, 4]));
        let mut b = Agent::new("b", speed_b, 0.5, 1);
        b.install_route(Route::new(vec![1, 2, 3, 4]));
        (m, Fleet::new(vec![a, b]).unwrap())
    }

    #[test]
    fn distance_and_time_to_node() {
        let (m, fleet) = racing_pair(1.0, 4.0);
        let d = PriorityHeuristic::to_node(HeuristicKind::DistanceToNode, 3).unwrap();
        let t = PriorityHeuristic::to_node(HeuristicKind::TimeToNode, 3).unwrap();
        assert_eq!(get_priorities(&m, &fleet, &[0, 1], &d).0, vec![0, 1]);
        // 10/1 = 10 s for a, 20/4 = 5 s for b
        assert_eq!(get_priorities(&m, &fleet, &[0, 1], &t).0, vec![1, 0]);
    }

    #[test]
    fn closest_first_and_task_start() {
        let m = line();
        let mut a = Agent::new("a", 1.0, 0.5, 0);
        a.goal = Some(3);
        a.task_start_time = 5.0;
        let mut b = Agent::new("b", 1.0, 0.5, 2);
        b.goal = Some(3);
        b.task_start_time = 9.0;
        let c = Agent::new("c", 1.0, 0.5, 1);
        let fleet = Fleet::new(vec![a, b, c]).unwrap();
        let cf = PriorityHeuristic::global(HeuristicKind::ClosestFirst).unwrap();
        assert_eq!(get_priorities(&m, &fleet, &[0, 1, 2], &cf).0, vec![1, 0, 2]);
        let ts = PriorityHeuristic::global(HeuristicKind::TimeSinceTaskStart).unwrap();
        assert_eq!(get_priorities(&m, &fleet, &[0, 1, 2], &ts).0, vec![0, 1, 2]);
    }

    #[test]
    fn heuristic_targets_are_checked() {
        assert!(PriorityHeuristic::global(HeuristicKind::TimeToNode).is_err());
        assert!(PriorityHeuristic::to_node(HeuristicKind::Name, 0).is_err());
        assert_eq!("shortest_route".parse::<HeuristicKind>().unwrap(), HeuristicKind::ClosestFirst);
        assert!("fastest".parse::<HeuristicKind>().is_err());
    }
}
