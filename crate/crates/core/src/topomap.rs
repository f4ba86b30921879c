//! Directed topological maps: nodes, constraint-carrying edges, sub-graph
//! filtering and deterministic shortest-route search.
//!
//! Nodes are stored sorted by id, so a node index (`NodeIx`) orders exactly
//! like the lexicographic order of the ids. Every tie-break in the crate
//! relies on that.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type NodeIx = usize;
pub type EdgeIx = usize;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub String);

impl NodeId {
    pub fn new(id: impl Into<String>) -> Self {
        NodeId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId(s.to_owned())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopoNode {
    pub id: NodeId,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopoEdge {
    pub from: NodeId,
    pub to: NodeId,
    pub length: f64,
    pub speed_limit: f64,
    pub envelope: f64,
}

/// Seconds needed to traverse `edge` for a robot with the given nominal speed.
pub fn edge_traversal_time(edge: &TopoEdge, agent_speed: f64) -> Result<f64> {
    if !(agent_speed > 0.0) || !agent_speed.is_finite() {
        return Err(Error::Config(format!("agent speed must be positive, got {agent_speed}")));
    }
    Ok(edge.length / edge.speed_limit.min(agent_speed))
}

/// An ordered node sequence, expressed in indices of the map it was planned on.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Route {
    pub nodes: Vec<NodeIx>,
}

impl Route {
    pub fn new(nodes: Vec<NodeIx>) -> Self {
        Route { nodes }
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn first(&self) -> Option<NodeIx> {
        self.nodes.first().copied()
    }

    pub fn last(&self) -> Option<NodeIx> {
        self.nodes.last().copied()
    }

    pub fn contains(&self, v: NodeIx) -> bool {
        self.nodes.contains(&v)
    }

    pub fn ids<'m>(&self, map: &'m TopoMap) -> Vec<&'m NodeId> {
        self.nodes.iter().map(|&v| map.node_id(v)).collect()
    }
}

/// Edge weighting used by route search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Weight {
    Distance,
    Time { agent_speed: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorridorStats {
    pub frac_deg_le_2: f64,
    pub articulation_count: usize,
    pub node_count: usize,
    pub edge_count: usize,
}

#[derive(Debug, Clone)]
pub struct TopoMap {
    name: String,
    nodes: Vec<TopoNode>,
    edges: Vec<TopoEdge>,
    ends: Vec<(NodeIx, NodeIx)>,
    index: HashMap<NodeId, NodeIx>,
    out: Vec<Vec<EdgeIx>>,
    inc: Vec<Vec<EdgeIx>>,
    lookup: HashMap<(NodeIx, NodeIx), EdgeIx>,
}

impl PartialEq for TopoMap {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.nodes == other.nodes && self.edges == other.edges
    }
}

impl TopoMap {
    /// Builds and validates a map. Nodes are re-sorted by id and edges by
    /// (from, to) so that equal maps have equal layouts.
    pub fn new(name: impl Into<String>, mut nodes: Vec<TopoNode>, edges: Vec<TopoEdge>) -> Result<Self> {
        nodes.sort_by(|a, b| a.id.cmp(&b.id));
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            if n.id.0.is_empty() || n.id.0.chars().any(char::is_whitespace) {
                return Err(Error::InvalidMap(format!("bad node id {:?}", n.id.0)));
            }
            if !n.x.is_finite() || !n.y.is_finite() {
                return Err(Error::InvalidMap(format!("node {} has non-finite coordinates", n.id)));
            }
            if index.insert(n.id.clone(), i).is_some() {
                return Err(Error::InvalidMap(format!("duplicate node id {}", n.id)));
            }
        }

        let mut keyed = Vec::with_capacity(edges.len());
        for e in edges {
            let f = *index
                .get(&e.from)
                .ok_or_else(|| Error::InvalidMap(format!("edge references unknown node {}", e.from)))?;
            let t = *index
                .get(&e.to)
                .ok_or_else(|| Error::InvalidMap(format!("edge references unknown node {}", e.to)))?;
            if f == t {
                return Err(Error::InvalidMap(format!("self-loop on {}", e.from)));
            }
            for (what, v) in [("length", e.length), ("speed_limit", e.speed_limit), ("envelope", e.envelope)] {
                if !(v > 0.0) || !v.is_finite() {
                    return Err(Error::InvalidMap(format!("edge {}->{} has non-positive {what}", e.from, e.to)));
                }
            }
            keyed.push(((f, t), e));
        }
        keyed.sort_by_key(|(k, _)| *k);

        let n = nodes.len();
        let mut out = vec![Vec::new(); n];
        let mut inc = vec![Vec::new(); n];
        let mut lookup = HashMap::with_capacity(keyed.len());
        let mut ends = Vec::with_capacity(keyed.len());
        let mut out_edges = Vec::with_capacity(keyed.len());
        for (ix, ((f, t), e)) in keyed.into_iter().enumerate() {
            if lookup.insert((f, t), ix).is_some() {
                return Err(Error::InvalidMap(format!("duplicate edge {}->{}", e.from, e.to)));
            }
            out[f].push(ix);
            inc[t].push(ix);
            ends.push((f, t));
            out_edges.push(e);
        }

        Ok(TopoMap { name: name.into(), nodes, edges: out_edges, ends, index, out, inc, lookup })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn nodes(&self) -> &[TopoNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[TopoEdge] {
        &self.edges
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn node_id(&self, v: NodeIx) -> &NodeId {
        &self.nodes[v].id
    }

    pub fn index_of(&self, id: &NodeId) -> Option<NodeIx> {
        self.index.get(id).copied()
    }

    pub fn require(&self, id: &NodeId) -> Result<NodeIx> {
        self.index_of(id).ok_or_else(|| Error::UnknownNode(id.0.clone()))
    }

    pub fn edge(&self, e: EdgeIx) -> &TopoEdge {
        &self.edges[e]
    }

    pub fn edge_ends(&self, e: EdgeIx) -> (NodeIx, NodeIx) {
        self.ends[e]
    }

    pub fn edge_between(&self, from: NodeIx, to: NodeIx) -> Option<EdgeIx> {
        self.lookup.get(&(from, to)).copied()
    }

    pub fn out_edges(&self, v: NodeIx) -> &[EdgeIx] {
        &self.out[v]
    }

    pub fn in_edges(&self, v: NodeIx) -> &[EdgeIx] {
        &self.inc[v]
    }

    pub fn total_length(&self) -> f64 {
        self.edges.iter().map(|e| e.length).sum()
    }

    fn with_edges(&self, keep_node: impl Fn(NodeIx) -> bool, keep_edge: impl Fn(EdgeIx) -> bool) -> TopoMap {
        let nodes: Vec<TopoNode> =
            self.nodes.iter().enumerate().filter(|(i, _)| keep_node(*i)).map(|(_, n)| n.clone()).collect();
        let edges: Vec<TopoEdge> = (0..self.edges.len())
            .filter(|&e| {
                let (f, t) = self.ends[e];
                keep_node(f) && keep_node(t) && keep_edge(e)
            })
            .map(|e| self.edges[e].clone())
            .collect();
        TopoMap::new(self.name.clone(), nodes, edges).expect("sub-graph of a valid map is valid")
    }
}

/// Weight of a single edge under a weighting mode.
pub(crate) fn edge_weight(edge: &TopoEdge, weight: Weight) -> f64 {
    match weight {
        Weight::Distance => edge.length,
        Weight::Time { agent_speed } => edge.length / edge.speed_limit.min(agent_speed),
    }
}

// ---------------------------------------------------------------------------
// Map file format

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MapFile {
    name: String,
    nodes: Vec<NodeRecord>,
    edges: Vec<EdgeRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeRecord {
    id: String,
    x: f64,
    y: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeRecord {
    from: String,
    to: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    length: Option<f64>,
    speed_limit: f64,
    envelope: f64,
}

/// Parses and validates a map file. A missing edge length defaults to the
/// Euclidean distance between its endpoints.
pub fn load_map(text: &str) -> Result<TopoMap> {
    let file: MapFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let coords: HashMap<&str, (f64, f64)> = file.nodes.iter().map(|n| (n.id.as_str(), (n.x, n.y))).collect();
    let mut edges = Vec::with_capacity(file.edges.len());
    for e in &file.edges {
        let length = match e.length {
            Some(l) => l,
            None => {
                let a = coords
                    .get(e.from.as_str())
                    .ok_or_else(|| Error::InvalidMap(format!("edge references unknown node {}", e.from)))?;
                let b = coords
                    .get(e.to.as_str())
                    .ok_or_else(|| Error::InvalidMap(format!("edge references unknown node {}", e.to)))?;
                (a.0 - b.0).hypot(a.1 - b.1)
            }
        };
        edges.push(TopoEdge {
            from: NodeId(e.from.clone()),
            to: NodeId(e.to.clone()),
            length,
            speed_limit: e.speed_limit,
            envelope: e.envelope,
        });
    }
    let nodes = file.nodes.into_iter().map(|n| TopoNode { id: NodeId(n.id), x: n.x, y: n.y }).collect();
    TopoMap::new(file.name, nodes, edges)
}

/// Serialises a map; lengths are always written explicitly.
pub fn save_map(map: &TopoMap) -> String {
    let file = MapFile {
        name: map.name.clone(),
        nodes: map.nodes.iter().map(|n| NodeRecord { id: n.id.0.clone(), x: n.x, y: n.y }).collect(),
        edges: map
            .edges
            .iter()
            .map(|e| EdgeRecord {
                from: e.from.0.clone(),
                to: e.to.0.clone(),
                length: Some(e.length),
                speed_limit: e.speed_limit,
                envelope: e.envelope,
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("map serialisation cannot fail")
}

// ---------------------------------------------------------------------------
// Sub-graphs

/// Keeps every node and exactly the edges whose envelope admits `footprint`.
pub fn permissible_subgraph(map: &TopoMap, footprint: f64) -> TopoMap {
    map.with_edges(|_| true, |e| map.edges[e].envelope >= footprint)
}

/// Removes `blocked` nodes and their incident edges, except nodes in `keep`.
pub fn filtered_map(map: &TopoMap, blocked: &[NodeId], keep: &[NodeId]) -> TopoMap {
    let mut drop = vec![false; map.node_count()];
    for id in blocked {
        if let Some(v) = map.index_of(id) {
            drop[v] = true;
        }
    }
    for id in keep {
        if let Some(v) = map.index_of(id) {
            drop[v] = false;
        }
    }
    map.with_edges(|v| !drop[v], |_| true)
}

// ---------------------------------------------------------------------------
// Search

/// Restrictions applied on the fly during search, equivalent to searching on
/// `filtered_map(permissible_subgraph(map, footprint), blocked, keep)` without
/// materialising the sub-graph.
#[derive(Debug, Clone, Copy, Default)]
pub struct SearchFilter<'a> {
    pub footprint: Option<f64>,
    pub blocked: Option<&'a [bool]>,
}

impl SearchFilter<'_> {
    #[inline]
    fn edge_ok(&self, map: &TopoMap, e: EdgeIx) -> bool {
        self.footprint.is_none_or(|fp| map.edges[e].envelope >= fp)
    }

    #[inline]
    fn node_ok(&self, v: NodeIx, s: NodeIx, g: NodeIx) -> bool {
        v == s || v == g || self.blocked.is_none_or(|b| !b[v])
    }
}

#[derive(Copy, Clone, PartialEq)]
struct HeapItem {
    cost: f64,
    node: NodeIx,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other.cost.total_cmp(&self.cost).then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Minimal-cost route from `s` to `g` over the nodes and edges admitted by
/// `filter`. The endpoints themselves are never filtered out; callers decide
/// whether a blocked goal is acceptable before searching.
///
/// Costs-to-go are computed by a reverse Dijkstra from `g`; the route is then
/// walked forward from `s`, choosing at each step the smallest-id successor
/// that stays on a minimal-cost route. Equal-cost alternatives therefore
/// resolve to the lexicographically smallest next node.
pub fn shortest_route_ix(map: &TopoMap, s: NodeIx, g: NodeIx, weight: Weight, filter: &SearchFilter) -> Option<Route> {
    if s == g {
        return Some(Route::new(vec![s]));
    }
    let n = map.node_count();
    let mut dist = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[g] = 0.0;
    heap.push(HeapItem { cost: 0.0, node: g });
    while let Some(HeapItem { cost, node }) = heap.pop() {
        if done[node] {
            continue;
        }
        done[node] = true;
        if node == s {
            break;
        }
        for &e in map.in_edges(node) {
            if !filter.edge_ok(map, e) {
                continue;
            }
            let (pred, _) = map.ends[e];
            if done[pred] || !filter.node_ok(pred, s, g) {
                continue;
            }
            let c = cost + edge_weight(&map.edges[e], weight);
            if c < dist[pred] {
                dist[pred] = c;
                heap.push(HeapItem { cost: c, node: pred });
            }
        }
    }
    if !done[s] {
        return None;
    }

    let mut nodes = vec![s];
    let mut cur = s;
    while cur != g {
        let here = dist[cur];
        let tol = 1e-9 * here.max(1.0);
        let mut next = None;
        // out-edges are sorted by target index, so the first admissible one wins
        for &e in map.out_edges(cur) {
            let (_, t) = map.ends[e];
            if !done[t] || !filter.edge_ok(map, e) || !filter.node_ok(t, s, g) {
                continue;
            }
            if edge_weight(&map.edges[e], weight) + dist[t] <= here + tol {
                next = Some(t);
                break;
            }
        }
        cur = next.expect("a finalised node always has a minimal successor");
        nodes.push(cur);
    }
    Some(Route::new(nodes))
}

/// Minimal-cost route between two named nodes, or `None` when `g` is unreachable.
pub fn route_search(map: &TopoMap, s: &NodeId, g: &NodeId, weight: Weight) -> Result<Option<Route>> {
    let si = map.require(s)?;
    let gi = map.require(g)?;
    Ok(shortest_route_ix(map, si, gi, weight, &SearchFilter::default()))
}

/// Sum of the traversed edge lengths.
pub fn route_distance(map: &TopoMap, route: &Route) -> Result<f64> {
    let mut total = 0.0;
    for w in route.nodes.windows(2) {
        let e = map.edge_between(w[0], w[1]).ok_or_else(|| {
            Error::BrokenRoute(format!("no edge {} -> {}", map.node_id(w[0]), map.node_id(w[1])))
        })?;
        total += map.edges[e].length;
    }
    Ok(total)
}

// ---------------------------------------------------------------------------
// Corridor diagnostics

/// Neighbour lists of the undirected support graph (opposed pairs merged).
pub fn support_neighbours(map: &TopoMap) -> Vec<Vec<NodeIx>> {
    let mut adj = vec![Vec::new(); map.node_count()];
    for &(f, t) in &map.ends {
        adj[f].push(t);
        adj[t].push(f);
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }
    adj
}

/// Cut vertices of an undirected graph given as neighbour lists.
pub fn articulation_points(adj: &[Vec<NodeIx>]) -> Vec<NodeIx> {
    let n = adj.len();
    let mut disc = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut is_cut = vec![false; n];
    let mut timer = 0;
    for root in 0..n {
        if disc[root] != usize::MAX {
            continue;
        }
        disc[root] = timer;
        low[root] = timer;
        timer += 1;
        let mut root_children = 0;
        // (node, parent, next neighbour position)
        let mut stack: Vec<(NodeIx, usize, usize)> = vec![(root, usize::MAX, 0)];
        while let Some(top) = stack.last_mut() {
            let (v, parent, pos) = *top;
            if pos < adj[v].len() {
                top.2 += 1;
                let w = adj[v][pos];
                if disc[w] == usize::MAX {
                    disc[w] = timer;
                    low[w] = timer;
                    timer += 1;
                    if v == root {
                        root_children += 1;
                    }
                    stack.push((w, v, 0));
                } else if w != parent {
                    low[v] = low[v].min(disc[w]);
                }
            } else {
                stack.pop();
                if parent != usize::MAX {
                    low[parent] = low[parent].min(low[v]);
                    if parent != root && low[v] >= disc[parent] {
                        is_cut[parent] = true;
                    }
                }
            }
        }
        if root_children > 1 {
            is_cut[root] = true;
        }
    }
    (0..n).filter(|&v| is_cut[v]).collect()
}

pub fn corridor_stats(map: &TopoMap) -> CorridorStats {
    let adj = support_neighbours(map);
    let n = map.node_count();
    let low_degree = adj.iter().filter(|a| a.len() <= 2).count();
    CorridorStats {
        frac_deg_le_2: if n == 0 { 0.0 } else { low_degree as f64 / n as f64 },
        articulation_count: articulation_points(&adj).len(),
        node_count: n,
        edge_count: map.edge_count(),
    }
}
