//! Resource-centric planning by route fragmentation.
//!
//! Every agent routes around the bodies of the others only. Nodes shared by
//! two or more routes are critical points; each one is owned by the agent that
//! would reach it first (by distance, or by time for the space-time variant).
//! Routes are then cut wherever their agent loses ownership, and agents may
//! execute only their first fragment.

use std::collections::{BTreeMap, BTreeSet};

use super::{PlanReport, Planner, PlannerKind};
use crate::baseplanner::{get_groups, get_priorities, route_for_active, HeuristicKind, MapMode, PriorityHeuristic, RouteOutcome};
use crate::error::{Error, Result};
use crate::fleet::{occupied_nodes_except, Fleet, Fragment, Occupancy};
use crate::topomap::{EdgeIx, NodeIx, Route, TopoMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FpVariant {
    SpaceOnly,
    SpaceTime,
}

impl FpVariant {
    fn ownership(&self) -> HeuristicKind {
        match self {
            FpVariant::SpaceOnly => HeuristicKind::DistanceToNode,
            FpVariant::SpaceTime => HeuristicKind::TimeToNode,
        }
    }
}

/// Critical points per route (keyed by agent) and contenders per point.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CriticalPointIndex {
    pub cp_by_route: BTreeMap<usize, BTreeSet<NodeIx>>,
    pub agents_by_cp: BTreeMap<NodeIx, BTreeSet<usize>>,
}

/// All-pairs node intersections of the given routes.
pub fn fp_get_critical_points(routes: &BTreeMap<usize, Route>) -> CriticalPointIndex {
    let mut cpi = CriticalPointIndex::default();
    let node_sets: BTreeMap<usize, BTreeSet<NodeIx>> =
        routes.iter().map(|(&a, r)| (a, r.nodes.iter().copied().collect())).collect();
    for (&a, nodes_a) in &node_sets {
        let cp = cpi.cp_by_route.entry(a).or_default();
        for (&b, nodes_b) in &node_sets {
            if a == b {
                continue;
            }
            for &v in nodes_a.intersection(nodes_b) {
                cp.insert(v);
                let agents = cpi.agents_by_cp.entry(v).or_default();
                agents.insert(a);
                agents.insert(b);
            }
        }
    }
    cpi
}

/// Fragments of one agent's route. `first_owned` is false when the route
/// starts on a contested node the agent does not own, in which case the lone
/// fragment is that node and nothing is executable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FragmentAssignment {
    pub fragments: Vec<Fragment>,
    pub first_owned: bool,
}

impl FragmentAssignment {
    pub fn executable(&self) -> &[NodeIx] {
        match self.fragments.first() {
            Some(f) if self.first_owned => &f.nodes,
            _ => &[],
        }
    }
}

/// Greedy per-node ownership and route cutting.
///
/// Agents are walked in ascending id order. The owner of a critical point is
/// the head of the priority order of its contenders under distance (or time)
/// to that node, read from the routes installed on `fleet`.
pub fn fp_assign_fragments(
    cpi: &CriticalPointIndex,
    routes: &BTreeMap<usize, Route>,
    fleet: &Fleet,
    map: &TopoMap,
    variant: FpVariant,
) -> BTreeMap<usize, FragmentAssignment> {
    let kind = variant.ownership();
    let mut owners: BTreeMap<NodeIx, Option<usize>> = BTreeMap::new();
    let mut claimed: BTreeSet<NodeIx> = BTreeSet::new();
    let mut out = BTreeMap::new();
    let empty = BTreeSet::new();

    for (&a, route) in routes {
        let critical = cpi.cp_by_route.get(&a).unwrap_or(&empty);
        let mut collective: Vec<Fragment> = Vec::new();
        let mut partial: Vec<NodeIx> = Vec::new();
        let mut first_owned = true;
        for &v in &route.nodes {
            if !critical.contains(&v) {
                partial.push(v);
                continue;
            }
            let owner = *owners.entry(v).or_insert_with(|| {
                let contenders: Vec<usize> = cpi.agents_by_cp.get(&v).map(|s| s.iter().copied().collect()).unwrap_or_default();
                let h = PriorityHeuristic { kind, target: Some(v) };
                get_priorities(map, fleet, &contenders, &h).head()
            });
            if owner == Some(a) && !claimed.contains(&v) {
                partial.push(v);
                claimed.insert(v);
            } else {
                if !partial.is_empty() {
                    collective.push(Fragment { nodes: std::mem::take(&mut partial) });
                } else if collective.is_empty() {
                    first_owned = false;
                }
                partial = vec![v];
                break;
            }
        }
        if !partial.is_empty() {
            collective.push(Fragment { nodes: partial });
        }
        if collective.is_empty() {
            first_owned = false;
        }
        out.insert(a, FragmentAssignment { fragments: collective, first_owned });
    }
    out
}

/// Fragments with their edges, plus the connector edges between consecutive
/// fragments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RouteFragments {
    pub fragments: Vec<Fragment>,
    pub fragment_edges: Vec<Vec<EdgeIx>>,
    pub connectors: Vec<EdgeIx>,
    pub executable: Vec<NodeIx>,
}

pub fn fp_build_route_fragments(assignment: &FragmentAssignment, map: &TopoMap) -> Result<RouteFragments> {
    let edge = |f: NodeIx, t: NodeIx| {
        map.edge_between(f, t).ok_or_else(|| {
            Error::Planner(format!("fragment step {} -> {} is not an edge", map.node_id(f), map.node_id(t)))
        })
    };
    let mut fragment_edges = Vec::with_capacity(assignment.fragments.len());
    for f in &assignment.fragments {
        if f.nodes.is_empty() {
            return Err(Error::Planner("empty fragment".into()));
        }
        fragment_edges.push(f.nodes.windows(2).map(|w| edge(w[0], w[1])).collect::<Result<Vec<_>>>()?);
    }
    let connectors = assignment
        .fragments
        .windows(2)
        .map(|w| edge(*w[0].nodes.last().unwrap(), w[1].nodes[0]))
        .collect::<Result<Vec<_>>>()?;
    Ok(RouteFragments {
        fragments: assignment.fragments.clone(),
        fragment_edges,
        connectors,
        executable: assignment.executable().to_vec(),
    })
}

#[derive(Debug, Clone)]
pub struct FragmentPlanner {
    variant: FpVariant,
}

impl FragmentPlanner {
    pub fn new(variant: FpVariant) -> Self {
        FragmentPlanner { variant }
    }
}

impl Planner for FragmentPlanner {
    fn kind(&self) -> PlannerKind {
        PlannerKind::Fp(self.variant)
    }

    fn find_routes(&mut self, map: &TopoMap, fleet: &mut Fleet, _now: f64) -> Result<PlanReport> {
        let groups = get_groups(fleet);
        let mut eligible: Vec<usize> = groups.new_active.iter().chain(&groups.active).copied().collect();
        eligible.sort_unstable();

        // one occupancy snapshot (positions only) for the whole instance
        let positions: Vec<_> = eligible
            .iter()
            .map(|&a| occupied_nodes_except(fleet, map.node_count(), Occupancy::Position, Some(a)))
            .collect();
        let mut report = PlanReport::default();
        let mut routes = BTreeMap::new();
        for (&a, blocking) in eligible.iter().zip(&positions) {
            match route_for_active(map, fleet, a, MapMode::Filtered, blocking) {
                RouteOutcome::Routed => {
                    report.routed += 1;
                    routes.insert(a, fleet.agents[a].route.clone());
                }
                RouteOutcome::Inactive => report.inactive += 1,
            }
        }

        let cpi = fp_get_critical_points(&routes);
        let assignments = fp_assign_fragments(&cpi, &routes, fleet, map, self.variant);
        for (a, assignment) in assignments {
            let built = fp_build_route_fragments(&assignment, map)?;
            let agent = &mut fleet.agents[a];
            if let Some(first) = built.executable.first() {
                if *first != agent.next_node() {
                    return Err(Error::Planner(format!("first fragment of {} does not start at its position", agent.id)));
                }
            }
            agent.plan_len = built.executable.len();
            agent.fragments = built.fragments;
        }
        Ok(report)
    }
}
