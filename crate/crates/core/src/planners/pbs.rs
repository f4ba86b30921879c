//! Priority-based search over partial agent orders.
//!
//! Each attempt plans the fleet in an order derived from a ruleset of pairwise
//! precedences; lower agents route around the routes of the agents they must
//! respect and around every robot body. Space-time conflicts in the result
//! spawn two child rulesets, one per precedence. The best attempt is installed
//! and any agent still in conflict is stopped.

use std::collections::{BTreeSet, HashSet, VecDeque};

use super::{PlanReport, Planner, PlannerKind};
use crate::baseplanner::{get_groups, route_for_active, MapMode, RouteOutcome};
use crate::error::{Error, Result};
use crate::fleet::{occupied_nodes_except, Fleet, Occupancy};
use crate::topomap::{edge_weight, NodeIx, Route, TopoMap, Weight};

/// Pairs `(higher, lower)`: `lower` plans after, and around, `higher`.
pub type PbsRuleset = BTreeSet<(usize, usize)>;

#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeConflict {
    pub node: NodeIx,
    pub agents: (usize, usize),
    /// Predicted arrival times at `node`, seconds after the planning instant.
    pub times: (f64, f64),
}

/// A stretch of time during which an agent holds a node: from the moment it
/// starts driving towards the node until it reaches the following one.
#[derive(Debug, Clone, Copy)]
struct Hold {
    node: NodeIx,
    from: f64,
    until: f64,
    arrival: f64,
}

fn holds(map: &TopoMap, fleet: &Fleet, agent: usize) -> Vec<Hold> {
    let a = &fleet.agents[agent];
    let speed = a.nominal_speed;
    let mut out = Vec::new();
    let lead = match a.edge_progress {
        Some(p) => {
            let t = p.remaining() / map.edge(p.edge).speed_limit.min(speed);
            out.push(Hold { node: p.from, from: 0.0, until: t, arrival: 0.0 });
            t
        }
        None => 0.0,
    };
    let nodes: &[NodeIx] = if a.route.is_empty() { &[] } else { &a.route.nodes };
    if nodes.is_empty() {
        out.push(Hold { node: a.next_node(), from: 0.0, until: f64::INFINITY, arrival: lead });
        return out;
    }
    let mut arrivals = Vec::with_capacity(nodes.len());
    arrivals.push(lead);
    for w in nodes.windows(2) {
        let e = map.edge_between(w[0], w[1]).expect("installed routes follow map edges");
        let t = arrivals.last().unwrap() + edge_weight(map.edge(e), Weight::Time { agent_speed: speed });
        arrivals.push(t);
    }
    for (i, &v) in nodes.iter().enumerate() {
        let from = if i == 0 { 0.0 } else { arrivals[i - 1] };
        let until = arrivals.get(i + 1).copied().unwrap_or(f64::INFINITY);
        out.push(Hold { node: v, from, until, arrival: arrivals[i] });
    }
    out
}

/// Pairwise space-time conflicts of the routes installed on `fleet`.
///
/// Two agents conflict on a node when their holds on it, each widened by
/// `window` seconds, overlap. An agent with no route holds its node
/// indefinitely, as does an agent at the end of its route. Head-on swaps show
/// up as conflicts on the shared edge's endpoints. Sorted by earliest arrival,
/// then node, then agents.
pub fn pbs_get_conflicts(map: &TopoMap, fleet: &Fleet, window: f64) -> Vec<SpaceTimeConflict> {
    let all: Vec<Vec<Hold>> = (0..fleet.len()).map(|a| holds(map, fleet, a)).collect();
    let mut by_node: Vec<Vec<(usize, Hold)>> = vec![Vec::new(); map.node_count()];
    for (a, hs) in all.iter().enumerate() {
        for h in hs {
            by_node[h.node].push((a, *h));
        }
    }
    let mut out = Vec::new();
    for (v, list) in by_node.iter().enumerate() {
        let mut seen: BTreeSet<(usize, usize)> = BTreeSet::new();
        for (i, (a, ha)) in list.iter().enumerate() {
            for (b, hb) in &list[i + 1..] {
                if a == b {
                    continue;
                }
                let overlap = ha.from < hb.until + window && hb.from < ha.until + window;
                let key = (*a.min(b), *a.max(b));
                if overlap && seen.insert(key) {
                    let times = if a < b { (ha.arrival, hb.arrival) } else { (hb.arrival, ha.arrival) };
                    out.push(SpaceTimeConflict { node: v, agents: key, times });
                }
            }
        }
    }
    out.sort_by(|x, y| {
        x.times.0.min(x.times.1)
            .total_cmp(&y.times.0.min(y.times.1))
            .then(x.node.cmp(&y.node))
            .then(x.agents.cmp(&y.agents))
    });
    out
}

fn has_cycle(n: usize, rules: &PbsRuleset) -> bool {
    topological_order(n, rules, &vec![0.0; n]).is_none()
}

/// Agents ordered so that every rule's higher agent precedes its lower agent;
/// among agents free to go next, lowest base priority then lowest id first.
fn topological_order(n: usize, rules: &PbsRuleset, base: &[f64]) -> Option<Vec<usize>> {
    let mut indegree = vec![0usize; n];
    let mut succ = vec![Vec::new(); n];
    for &(hi, lo) in rules {
        indegree[lo] += 1;
        succ[hi].push(lo);
    }
    let mut order = Vec::with_capacity(n);
    let mut done = vec![false; n];
    while order.len() < n {
        let next = (0..n)
            .filter(|&a| !done[a] && indegree[a] == 0)
            .min_by(|&x, &y| base[x].total_cmp(&base[y]).then(x.cmp(&y)))?;
        done[next] = true;
        order.push(next);
        for &lo in &succ[next] {
            indegree[lo] -= 1;
        }
    }
    Some(order)
}

/// Agents `agent` must respect: everything above it in the transitive closure.
fn ancestors(n: usize, rules: &PbsRuleset, agent: usize) -> Vec<usize> {
    let mut pred = vec![Vec::new(); n];
    for &(hi, lo) in rules {
        pred[lo].push(hi);
    }
    let mut seen = vec![false; n];
    let mut stack = vec![agent];
    while let Some(x) = stack.pop() {
        for &p in &pred[x] {
            if !seen[p] {
                seen[p] = true;
                stack.push(p);
            }
        }
    }
    (0..n).filter(|&a| seen[a] && a != agent).collect()
}

struct Attempt {
    routes: Vec<Route>,
    conflicts: usize,
    fails: usize,
}

#[derive(Debug, Clone)]
pub struct PbsPlanner {
    max_attempts: usize,
    window: f64,
}

impl PbsPlanner {
    pub fn new(max_attempts: usize, window: f64) -> Result<Self> {
        if max_attempts == 0 {
            return Err(Error::Config("pbs_max_attempts must be at least 1".into()));
        }
        if !(window >= 0.0) || !window.is_finite() {
            return Err(Error::Config("pbs_window_s must be a non-negative number".into()));
        }
        Ok(PbsPlanner { max_attempts, window })
    }

    pub fn window(&self) -> f64 {
        self.window
    }
}

fn install(fleet: &mut Fleet, routes: &[Route]) {
    for (agent, route) in fleet.agents.iter_mut().zip(routes) {
        if route.is_empty() {
            agent.clear_route();
            agent.route_issued = false;
        } else {
            agent.install_route(route.clone());
        }
    }
}

impl Planner for PbsPlanner {
    fn kind(&self) -> PlannerKind {
        PlannerKind::Pbs
    }

    fn find_routes(&mut self, map: &TopoMap, fleet: &mut Fleet, _now: f64) -> Result<PlanReport> {
        let n = fleet.len();
        let groups = get_groups(fleet);
        let mut base = vec![f64::INFINITY; n];
        for &a in groups.new_active.iter().chain(&groups.active) {
            base[a] = -1.0;
        }

        let mut queue: VecDeque<PbsRuleset> = VecDeque::from([PbsRuleset::new()]);
        let mut known: HashSet<PbsRuleset> = HashSet::from([PbsRuleset::new()]);
        let mut best: Option<Attempt> = None;
        let mut report = PlanReport::default();

        for _ in 0..self.max_attempts {
            let Some(rules) = queue.pop_front() else { break };
            report.pbs_attempts += 1;
            let order = topological_order(n, &rules, &base).expect("queued rulesets are acyclic");
            for &a in &order {
                fleet.agents[a].clear_route();
            }
            let mut fails = 0;
            for &a in &order {
                if base[a].is_infinite() {
                    continue;
                }
                let respect = ancestors(n, &rules, a);
                let blocking = occupied_nodes_except(fleet, map.node_count(), Occupancy::RouteOf(&respect), Some(a));
                if route_for_active(map, fleet, a, MapMode::Filtered, &blocking) == RouteOutcome::Inactive {
                    fails += 1;
                }
            }
            let conflicts = pbs_get_conflicts(map, fleet, self.window);
            let better = best.as_ref().is_none_or(|b| (conflicts.len(), fails) < (b.conflicts, b.fails));
            if better {
                best = Some(Attempt {
                    routes: fleet.agents.iter().map(|a| a.route.clone()).collect(),
                    conflicts: conflicts.len(),
                    fails,
                });
            }
            if conflicts.is_empty() && fails == 0 {
                report.pbs_accepted = true;
                break;
            }
            if let Some(c) = conflicts.first() {
                let (a, b) = c.agents;
                for rule in [(a, b), (b, a)] {
                    let mut child = rules.clone();
                    child.insert(rule);
                    if !has_cycle(n, &child) && !known.contains(&child) {
                        known.insert(child.clone());
                        queue.push_back(child);
                    }
                }
            }
        }

        let best = best.expect("at least one attempt runs");
        install(fleet, &best.routes);
        let conflicts = pbs_get_conflicts(map, fleet, self.window);
        if report.pbs_accepted && !conflicts.is_empty() {
            return Err(Error::Planner("accepted PBS attempt re-verified with conflicts".into()));
        }
        // every agent left in a conflict stops where it is; stationary agents
        // hold only their own position, which no route contains
        let conflicted: BTreeSet<usize> = conflicts.iter().flat_map(|c| [c.agents.0, c.agents.1]).collect();
        for a in conflicted {
            if !fleet.agents[a].route.is_empty() {
                fleet.agents[a].clear_route();
                fleet.agents[a].route_issued = false;
                report.pbs_deactivated += 1;
            }
        }
        if !pbs_get_conflicts(map, fleet, self.window).is_empty() {
            return Err(Error::Planner("conflicts left after stopping conflicted agents".into()));
        }
        for a in &fleet.agents {
            if a.goal.is_some() {
                if a.route.is_empty() {
                    report.inactive += 1;
                } else {
                    report.routed += 1;
                }
            }
        }
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fleet::Agent;
    use crate::topomap::{TopoEdge, TopoNode};

    fn line(n: usize, length: f64) -> TopoMap {
        let ids: Vec<String> = (0..n).map(|i| format!("n{i:03}")).collect();
        let nodes = ids.iter().map(|i| TopoNode { id: i.as_str().into(), x: 0.0, y: 0.0 }).collect();
        let mut edges = Vec::new();
        for w in ids.windows(2) {
            for (f, t) in [(&w[0], &w[1]), (&w[1], &w[0])] {
                edges.push(TopoEdge { from: f.as_str().into(), to: t.as_str().into(), length, speed_limit: 10.0, envelope: 1.0 });
            }
        }
        TopoMap::new("l", nodes, edges).unwrap()
    }

    fn with_routes(routes: &[Vec<NodeIx>]) -> Fleet {
        let agents = routes
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let mut a = Agent::new(format!("a{i}"), 1.0, 0.5, r[0]);
                a.install_route(Route::new(r.clone()));
                a
            })
            .collect();
        Fleet::new(agents).unwrap()
    }

    #[test]
    fn temporally_separated_pass_is_not_a_conflict() {
        // 1 m edges at 1 m/s: a reaches node 10 at t=10, b at t=100
        let map = line(120, 1.0);
        let fleet = with_routes(&[(0..=12).collect(), (10..=110).rev().collect()]);
        let conflicts = pbs_get_conflicts(&map, &fleet, 5.0);
        assert!(conflicts.iter().all(|c| c.node != 10), "{conflicts:?}");
        // a then parks on node 12 for good, which b drives through later
        assert_eq!(conflicts.iter().map(|c| c.node).collect::<Vec<_>>(), vec![12]);
    }

    #[test]
    fn close_arrivals_conflict() {
        let map = line(30, 1.0);
        // a arrives at 10 at t=10; b arrives at 10 at t=11 coming the other way
        let fleet = with_routes(&[(0..=12).collect(), (10..=21).rev().collect()]);
        let conflicts = pbs_get_conflicts(&map, &fleet, 5.0);
        let c = conflicts.iter().find(|c| c.node == 10).expect("conflict on node 10");
        assert_eq!(c.times, (10.0, 11.0));
    }

    #[test]
    fn swap_is_reported_on_edge_endpoints() {
        let map = line(4, 2.0);
        // a: 1 -> 2, b: 2 -> 1, overlapping during [0, 2]
        let fleet = with_routes(&[vec![1, 2], vec![2, 1]]);
        let nodes: BTreeSet<NodeIx> = pbs_get_conflicts(&map, &fleet, 0.0).iter().map(|c| c.node).collect();
        assert_eq!(nodes, BTreeSet::from([1, 2]));
    }

    #[test]
    fn ordering_respects_rules() {
        let rules = PbsRuleset::from([(2, 0)]);
        assert_eq!(topological_order(3, &rules, &[-1.0, -1.0, -1.0]).unwrap(), vec![1, 2, 0]);
        assert_eq!(topological_order(3, &PbsRuleset::new(), &[f64::INFINITY, -1.0, -1.0]).unwrap(), vec![1, 2, 0]);
        assert!(has_cycle(2, &PbsRuleset::from([(0, 1), (1, 0)])));
        assert_eq!(ancestors(3, &PbsRuleset::from([(0, 1), (1, 2)]), 2), vec![0, 1]);
    }
}
