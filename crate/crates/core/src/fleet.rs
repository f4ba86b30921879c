//! Agent, task and fragment state shared by the planners and the simulator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topomap::{
    route_distance, shortest_route_ix, EdgeIx, NodeId, NodeIx, Route, SearchFilter, TopoMap, Weight,
};

pub const DEFAULT_NOMINAL_SPEED: f64 = 1.0;
pub const DEFAULT_FOOTPRINT: f64 = 0.8;
pub const DEFAULT_MAX_REDRAWS: usize = 50;

/// Position along an edge the agent is currently traversing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeProgress {
    pub edge: EdgeIx,
    pub from: NodeIx,
    pub to: NodeIx,
    pub length: f64,
    pub travelled: f64,
}

impl EdgeProgress {
    pub fn remaining(&self) -> f64 {
        (self.length - self.travelled).max(0.0)
    }
}

/// A contiguous piece of a route.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fragment {
    pub nodes: Vec<NodeIx>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub id: String,
    pub nominal_speed: f64,
    pub footprint: f64,
    /// Node last reached.
    pub current_node: NodeIx,
    pub edge_progress: Option<EdgeProgress>,
    pub goal: Option<NodeIx>,
    pub task_start_time: f64,
    /// Remaining route; starts at the next attainable node when non-empty.
    pub route: Route,
    pub fragments: Vec<Fragment>,
    /// Length of the executable prefix of `route`.
    pub plan_len: usize,
    pub optimal_route_len: f64,
    /// Whether a route has been installed for the current goal.
    pub route_issued: bool,
}

impl Agent {
    pub fn new(id: impl Into<String>, nominal_speed: f64, footprint: f64, start: NodeIx) -> Self {
        Agent {
            id: id.into(),
            nominal_speed,
            footprint,
            current_node: start,
            edge_progress: None,
            goal: None,
            task_start_time: 0.0,
            route: Route::default(),
            fragments: Vec::new(),
            plan_len: 0,
            optimal_route_len: 0.0,
            route_issued: false,
        }
    }

    /// The node the agent stands on, or the node it is driving towards.
    pub fn next_node(&self) -> NodeIx {
        self.edge_progress.map_or(self.current_node, |p| p.to)
    }

    pub fn is_moving(&self) -> bool {
        self.edge_progress.is_some()
    }

    pub fn executable_plan(&self) -> &[NodeIx] {
        &self.route.nodes[..self.plan_len.min(self.route.len())]
    }

    /// Drops any route, fragments and executable plan.
    pub fn clear_route(&mut self) {
        self.route = Route::default();
        self.fragments.clear();
        self.plan_len = 0;
    }

    /// Installs a route whose whole length is executable.
    pub fn install_route(&mut self, route: Route) {
        self.plan_len = route.len();
        self.fragments = vec![Fragment { nodes: route.nodes.clone() }];
        self.route = route;
        self.route_issued = true;
    }

    /// Nodes this agent physically occupies: its node, or both ends of the
    /// edge it is on.
    pub fn position_nodes(&self) -> impl Iterator<Item = NodeIx> + '_ {
        let (a, b) = match self.edge_progress {
            Some(p) => (p.from, Some(p.to)),
            None => (self.current_node, None),
        };
        std::iter::once(a).chain(b)
    }

    /// Advances the route cursor when the agent leaves `route[0]`.
    pub(crate) fn pop_route_front(&mut self) {
        if !self.route.nodes.is_empty() {
            self.route.nodes.remove(0);
            self.plan_len = self.plan_len.saturating_sub(1);
            if let Some(first) = self.fragments.first_mut() {
                if !first.nodes.is_empty() {
                    first.nodes.remove(0);
                }
                if first.nodes.is_empty() {
                    self.fragments.remove(0);
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: u64,
    pub agent: String,
    pub start_node: NodeId,
    pub goal: NodeId,
    pub start_time: f64,
    pub end_time: Option<f64>,
    pub d_opt: f64,
    pub d_exec: f64,
}

/// Agents sorted by id. Agent indices are positions in this vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Fleet {
    pub agents: Vec<Agent>,
}

impl Fleet {
    pub fn new(mut agents: Vec<Agent>) -> Result<Self> {
        agents.sort_by(|a, b| a.id.cmp(&b.id));
        for w in agents.windows(2) {
            if w[0].id == w[1].id {
                return Err(Error::Config(format!("duplicate agent id {}", w[0].id)));
            }
        }
        for a in &agents {
            if !(a.nominal_speed > 0.0) || !(a.footprint > 0.0) {
                return Err(Error::Config(format!("agent {} needs positive speed and footprint", a.id)));
            }
        }
        Ok(Fleet { agents })
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.agents.binary_search_by(|a| a.id.as_str().cmp(id)).ok()
    }
}

/// The three lifecycle groups, as agent indices in ascending order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AgentGroups {
    pub new_active: Vec<usize>,
    pub active: Vec<usize>,
    pub inactive: Vec<usize>,
}

/// A node set sized to a map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockingSet {
    mask: Vec<bool>,
}

impl BlockingSet {
    pub fn empty(node_count: usize) -> Self {
        BlockingSet { mask: vec![false; node_count] }
    }

    pub fn insert(&mut self, v: NodeIx) {
        self.mask[v] = true;
    }

    pub fn remove(&mut self, v: NodeIx) {
        self.mask[v] = false;
    }

    pub fn contains(&self, v: NodeIx) -> bool {
        self.mask[v]
    }

    pub fn len(&self) -> usize {
        self.mask.iter().filter(|b| **b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.mask.iter().any(|b| *b)
    }

    pub fn iter(&self) -> impl Iterator<Item = NodeIx> + '_ {
        self.mask.iter().enumerate().filter(|(_, b)| **b).map(|(i, _)| i)
    }

    pub fn as_mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn ids(&self, map: &TopoMap) -> Vec<NodeId> {
        self.iter().map(|v| map.node_id(v).clone()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Occupancy<'a> {
    /// Agent positions only.
    Position,
    /// Positions plus every node of every current route.
    Route,
    /// Positions plus routes of the listed agents only.
    RouteOf(&'a [usize]),
}

/// Nodes occupied by the fleet under `mode`. `exclude` omits one agent's own
/// contribution, which is how planners build a blocking set for that agent.
pub fn occupied_nodes_except(fleet: &Fleet, node_count: usize, mode: Occupancy, exclude: Option<usize>) -> BlockingSet {
    let mut set = BlockingSet::empty(node_count);
    for (i, a) in fleet.agents.iter().enumerate() {
        if Some(i) == exclude {
            continue;
        }
        for v in a.position_nodes() {
            set.insert(v);
        }
    }
    let mut add_route = |i: usize| {
        if Some(i) != exclude {
            for &v in &fleet.agents[i].route.nodes {
                set.insert(v);
            }
        }
    };
    match mode {
        Occupancy::Position => {}
        Occupancy::Route => (0..fleet.len()).for_each(&mut add_route),
        Occupancy::RouteOf(subset) => subset.iter().copied().for_each(&mut add_route),
    }
    set
}

pub fn occupied_nodes(fleet: &Fleet, node_count: usize, mode: Occupancy) -> BlockingSet {
    occupied_nodes_except(fleet, node_count, mode, None)
}

/// Optimal route from `from` to `goal` on the agent's permissible sub-graph
/// with no other agents present.
pub fn empty_graph_route(map: &TopoMap, footprint: f64, from: NodeIx, goal: NodeIx) -> Option<Route> {
    let filter = SearchFilter { footprint: Some(footprint), blocked: None };
    shortest_route_ix(map, from, goal, Weight::Distance, &filter)
}

/// Gives `agent` a new task towards `goal`, recording the empty-graph optimum.
/// Returns `None` (and leaves the agent untouched) when the goal cannot be
/// reached on the agent's permissible sub-graph.
pub fn assign_task(agent: &mut Agent, task_id: u64, goal: NodeIx, now: f64, map: &TopoMap) -> Result<Option<Task>> {
    if goal >= map.node_count() {
        return Err(Error::UnknownNode(format!("#{goal}")));
    }
    let start = agent.next_node();
    if goal == start {
        return Err(Error::Config(format!("goal of {} equals its current node", agent.id)));
    }
    let Some(route) = empty_graph_route(map, agent.footprint, start, goal) else {
        return Ok(None);
    };
    let d_opt = route_distance(map, &route)?;
    agent.goal = Some(goal);
    agent.task_start_time = now;
    agent.optimal_route_len = d_opt;
    agent.route_issued = false;
    agent.clear_route();
    Ok(Some(Task {
        id: task_id,
        agent: agent.id.clone(),
        start_node: map.node_id(start).clone(),
        goal: map.node_id(goal).clone(),
        start_time: now,
        end_time: None,
        d_opt,
        d_exec: 0.0,
    }))
}

// ---------------------------------------------------------------------------
// Fleet configuration

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub id: String,
    #[serde(default = "default_speed")]
    pub nominal_speed: f64,
    #[serde(default = "default_footprint")]
    pub footprint: f64,
    pub start_node: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FleetConfig {
    Explicit {
        agents: Vec<AgentSpec>,
    },
    Homogeneous {
        count: usize,
        #[serde(default = "default_speed")]
        nominal_speed: f64,
        #[serde(default = "default_footprint")]
        footprint: f64,
        #[serde(default = "default_auto")]
        start_nodes: String,
    },
}

fn default_speed() -> f64 {
    DEFAULT_NOMINAL_SPEED
}

fn default_footprint() -> f64 {
    DEFAULT_FOOTPRINT
}

fn default_auto() -> String {
    "auto".into()
}

impl FleetConfig {
    pub fn homogeneous(count: usize) -> Self {
        FleetConfig::Homogeneous {
            count,
            nominal_speed: DEFAULT_NOMINAL_SPEED,
            footprint: DEFAULT_FOOTPRINT,
            start_nodes: default_auto(),
        }
    }

    pub fn size(&self) -> usize {
        match self {
            FleetConfig::Explicit { agents } => agents.len(),
            FleetConfig::Homogeneous { count, .. } => *count,
        }
    }

    pub fn build(&self, map: &TopoMap) -> Result<Fleet> {
        let agents = match self {
            FleetConfig::Explicit { agents } => agents
                .iter()
                .map(|s| {
                    let start = map.require(&NodeId(s.start_node.clone()))?;
                    Ok(Agent::new(s.id.clone(), s.nominal_speed, s.footprint, start))
                })
                .collect::<Result<Vec<_>>>()?,
            FleetConfig::Homogeneous { count, nominal_speed, footprint, start_nodes } => {
                if start_nodes != "auto" {
                    return Err(Error::Config(format!("unsupported start_nodes {start_nodes:?}")));
                }
                let starts = auto_start_nodes(map, *count)?;
                starts
                    .into_iter()
                    .enumerate()
                    .map(|(i, v)| Agent::new(format!("robot_{i:02}"), *nominal_speed, *footprint, v))
                    .collect()
            }
        };
        let mut seen = vec![false; map.node_count()];
        for a in &agents {
            if std::mem::replace(&mut seen[a.current_node], true) {
                return Err(Error::Config(format!("start node {} used twice", map.node_id(a.current_node))));
            }
        }
        Fleet::new(agents)
    }
}

/// The first `count` header nodes (ids starting with `h`) in id order, or the
/// first `count` nodes when the map has none. Spreading robots evenly over
/// the sorted pool lines them up on both rails of one rung, which cuts the
/// ladder and can deadlock position-blocking planners from the first tick.
pub fn auto_start_nodes(map: &TopoMap, count: usize) -> Result<Vec<NodeIx>> {
    let mut pool: Vec<NodeIx> = (0..map.node_count()).filter(|&v| map.node_id(v).0.starts_with('h')).collect();
    if pool.is_empty() {
        pool = (0..map.node_count()).collect();
    }
    if count > pool.len() {
        return Err(Error::Config(format!("cannot place {count} agents on {} start nodes", pool.len())));
    }
    Ok(pool[..count].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topomap::{TopoEdge, TopoNode};

    fn line3() -> TopoMap {
        let nodes = ["A", "B", "C"].iter().map(|i| TopoNode { id: (*i).into(), x: 0.0, y: 0.0 }).collect();
        let mut edges = Vec::new();
        for (f, t) in [("A", "B"), ("B", "C")] {
            for (x, y) in [(f, t), (t, f)] {
                edges.push(TopoEdge { from: x.into(), to: y.into(), length: 1.0, speed_limit: 1.0, envelope: 1.0 });
            }
        }
        TopoMap::new("l", nodes, edges).unwrap()
    }

    #[test]
    fn position_occupancy() {
        let fleet = Fleet::new(vec![Agent::new("a", 1.0, 0.5, 0), Agent::new("b", 1.0, 0.5, 1)]).unwrap();
        let set = occupied_nodes(&fleet, 3, Occupancy::Position);
        assert_eq!(set.iter().collect::<Vec<_>>(), vec![0, 1]);
    }

    #[test]
    fn in_transit_occupies_both_ends() {
        let map = line3();
        let mut a = Agent::new("a", 1.0, 0.5, 0);
        a.edge_progress =
            Some(EdgeProgress { edge: map.edge_between(0, 1).unwrap(), from: 0, to: 1, length: 1.0, travelled: 0.3 });
        let fleet = Fleet::new(vec![a]).unwrap();
        assert_eq!(occupied_nodes(&fleet, 3, Occupancy::Position).iter().collect::<Vec<_>>(), vec![0, 1]);
    }

    #[test]
    fn route_occupancy_and_subsets() {
        let mut a = Agent::new("a", 1.0, 0.5, 0);
        a.install_route(Route::new(vec![0, 1, 2]));
        let b = Agent::new("b", 1.0, 0.5, 2);
        let fleet = Fleet::new(vec![a, b]).unwrap();
        assert_eq!(occupied_nodes(&fleet, 4, Occupancy::Route).iter().collect::<Vec<_>>(), vec![0, 1, 2]);
        assert_eq!(occupied_nodes(&fleet, 4, Occupancy::RouteOf(&[1])).iter().collect::<Vec<_>>(), vec![0, 2]);
        let except_a = occupied_nodes_except(&fleet, 4, Occupancy::Route, Some(0));
        assert_eq!(except_a.iter().collect::<Vec<_>>(), vec![2]);
    }

    #[test]
    fn assign_task_records_optimum() {
        let map = line3();
        let mut a = Agent::new("a", 1.0, 0.5, 0);
        let t = assign_task(&mut a, 7, 2, 12.5, &map).unwrap().unwrap();
        assert_eq!(t.d_opt, 2.0);
        assert_eq!(t.d_exec, 0.0);
        assert_eq!(a.task_start_time, 12.5);
        assert_eq!(a.goal, Some(2));
        assert!(assign_task(&mut a, 8, 0, 0.0, &map).is_err());
    }

    #[test]
    fn assign_task_rejects_impermissible_goal() {
        let map = line3();
        let mut wide = Agent::new("w", 1.0, 1.5, 0);
        assert!(assign_task(&mut wide, 1, 2, 0.0, &map).unwrap().is_none());
        assert_eq!(wide.goal, None);
    }

    #[test]
    fn fleet_config_shapes() {
        let explicit: FleetConfig = serde_json::from_str(
            r#"{"agents":[{"id":"x","nominal_speed":2,"footprint":0.5,"start_node":"A"}]}"#,
        )
        .unwrap();
        let fleet = explicit.build(&line3()).unwrap();
        assert_eq!(fleet.agents[0].nominal_speed, 2.0);

        let auto: FleetConfig = serde_json::from_str(r#"{"count":3,"nominal_speed":1,"footprint":0.8,"start_nodes":"auto"}"#).unwrap();
        let fleet = auto.build(&line3()).unwrap();
        assert_eq!(fleet.len(), 3);
        assert_eq!(fleet.agents.iter().map(|a| a.current_node).collect::<Vec<_>>(), vec![0, 1, 2]);

        let clash: FleetConfig = serde_json::from_str(
            r#"{"agents":[{"id":"x","start_node":"A"},{"id":"y","start_node":"A"}]}"#,
        )
        .unwrap();
        assert!(clash.build(&line3()).is_err());
        assert!(FleetConfig::homogeneous(4).build(&line3()).is_err());
    }
}
