// Shared fixtures for the integration tests. Each test binary uses a subset.
#![allow(dead_code)]

use mrpp_core::fleet::{Agent, EdgeProgress};
use std::collections::{BTreeMap, BTreeSet};

use mrpp_core::topomap::{NodeIx, Route, TopoEdge, TopoMap, TopoNode};
use mrpp_core::Fleet;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Node ids are zero-padded so index order equals id order.
pub fn nid(i: usize) -> String {
    format!("n{i:02}")
}

pub fn edge(f: usize, t: usize, length: f64) -> TopoEdge {
    TopoEdge { from: nid(f).as_str().into(), to: nid(t).as_str().into(), length, speed_limit: 1.0, envelope: 1.0 }
}

pub fn build(n: usize, edges: Vec<TopoEdge>) -> TopoMap {
    let nodes = (0..n).map(|i| TopoNode { id: nid(i).as_str().into(), x: i as f64, y: 0.0 }).collect();
    TopoMap::new("t", nodes, edges).unwrap()
}

/// A two-way corridor n00 .. n{n-1} with unit edges.
pub fn corridor(n: usize) -> TopoMap {
    let mut edges = Vec::new();
    for i in 1..n {
        edges.push(edge(i - 1, i, 1.0));
        edges.push(edge(i, i - 1, 1.0));
    }
    build(n, edges)
}

/// Random directed graph: each ordered pair gets an edge with probability
/// `p`, integer lengths 1..=4 (so equal-cost ties actually occur) and speed
/// limits 1 or 2.
pub fn random_digraph(rng: &mut ChaCha8Rng, n: usize, p: f64) -> TopoMap {
    let mut edges = Vec::new();
    for f in 0..n {
        for t in 0..n {
            if f != t && rng.random_bool(p) {
                let mut e = edge(f, t, rng.random_range(1..=4) as f64);
                e.speed_limit = rng.random_range(1..=2) as f64;
                edges.push(e);
            }
        }
    }
    build(n, edges)
}

/// Random connected two-way graph: a random spanning tree plus extra
/// undirected links, giving corridors with a few cycles.
pub fn random_connected(rng: &mut ChaCha8Rng, n: usize, extra: usize) -> TopoMap {
    let mut pairs = std::collections::BTreeSet::new();
    for v in 1..n {
        let u = rng.random_range(0..v);
        pairs.insert((u, v));
    }
    for _ in 0..extra {
        let u = rng.random_range(0..n);
        let v = rng.random_range(0..n);
        if u != v {
            pairs.insert((u.min(v), u.max(v)));
        }
    }
    let mut edges = Vec::new();
    for (u, v) in pairs {
        let l = rng.random_range(1..=3) as f64;
        edges.push(edge(u, v, l));
        edges.push(edge(v, u, l));
    }
    build(n, edges)
}

/// Every simple path from `s` to `g`, as node index sequences.
pub fn all_simple_paths(map: &TopoMap, s: NodeIx, g: NodeIx) -> Vec<Vec<NodeIx>> {
    fn walk(map: &TopoMap, g: NodeIx, path: &mut Vec<NodeIx>, seen: &mut [bool], out: &mut Vec<Vec<NodeIx>>) {
        let v = *path.last().unwrap();
        if v == g {
            out.push(path.clone());
            return;
        }
        for &e in map.out_edges(v) {
            let (_, t) = map.edge_ends(e);
            if !seen[t] {
                seen[t] = true;
                path.push(t);
                walk(map, g, path, seen, out);
                path.pop();
                seen[t] = false;
            }
        }
    }
    let mut out = Vec::new();
    let mut seen = vec![false; map.node_count()];
    seen[s] = true;
    walk(map, g, &mut vec![s], &mut seen, &mut out);
    out
}

pub fn path_length(map: &TopoMap, path: &[NodeIx]) -> f64 {
    path.windows(2).map(|w| map.edge(map.edge_between(w[0], w[1]).unwrap()).length).sum()
}

/// A random fleet snapshot on `map`: distinct positions, some agents in
/// transit, most with a goal, and a random stale route on some of them.
pub fn random_fleet(rng: &mut ChaCha8Rng, map: &TopoMap, count: usize) -> Fleet {
    let n = map.node_count();
    let mut free: Vec<NodeIx> = (0..n).collect();
    free.shuffle(rng);
    let mut agents = Vec::new();
    for i in 0..count {
        let Some(start) = free.pop() else { break };
        let mut a = Agent::new(format!("r{i:02}"), rng.random_range(1..=2) as f64 * 0.5, 0.5, start);
        if rng.random_bool(0.3) {
            let outs: Vec<_> = map.out_edges(start).iter().copied().filter(|&e| free.contains(&map.edge_ends(e).1)).collect();
            if let Some(&e) = outs.first() {
                let to = map.edge_ends(e).1;
                free.retain(|&v| v != to);
                let length = map.edge(e).length;
                a.edge_progress = Some(EdgeProgress { edge: e, from: start, to, length, travelled: length / 2.0 });
            }
        }
        if rng.random_bool(0.85) {
            let here = a.next_node();
            let goal = loop {
                let g = rng.random_range(0..n);
                if g != here {
                    break g;
                }
            };
            a.goal = Some(goal);
            a.task_start_time = rng.random_range(0..100) as f64;
            if rng.random_bool(0.5) {
                // stale route from an earlier instance: any walk from the next node
                let mut walk = vec![here];
                for _ in 0..rng.random_range(0..4) {
                    let outs = map.out_edges(*walk.last().unwrap());
                    if outs.is_empty() {
                        break;
                    }
                    walk.push(map.edge_ends(outs[rng.random_range(0..outs.len())]).1);
                }
                a.install_route(Route::new(walk));
            }
        }
        agents.push(a);
    }
    Fleet::new(agents).unwrap()
}

/// Minimum-cost simple path, ties to the lexicographically smallest node sequence.
pub fn enumerate_best(map: &TopoMap, s: NodeIx, g: NodeIx, cost: impl Fn(&[NodeIx]) -> f64) -> Option<Vec<NodeIx>> {
    let mut best: Option<(f64, Vec<NodeIx>)> = None;
    for p in all_simple_paths(map, s, g) {
        let c = cost(&p);
        let better = match &best {
            None => true,
            Some((bc, bp)) => c < bc - 1e-9 || ((c - bc).abs() <= 1e-9 && p < *bp),
        };
        if better {
            best = Some((c, p));
        }
    }
    best.map(|(_, p)| p)
}

/// Pairwise-intersection oracle: a node is critical for a route when some
/// other route also contains it.
pub fn critical_oracle(routes: &BTreeMap<usize, Route>) -> (BTreeMap<usize, BTreeSet<NodeIx>>, BTreeMap<NodeIx, BTreeSet<usize>>) {
    let mut by_route = BTreeMap::new();
    let mut by_node: BTreeMap<NodeIx, BTreeSet<usize>> = BTreeMap::new();
    for (&a, ra) in routes {
        let mut mine = BTreeSet::new();
        for (&b, rb) in routes {
            if a == b {
                continue;
            }
            for &v in &ra.nodes {
                if rb.nodes.contains(&v) {
                    mine.insert(v);
                    by_node.entry(v).or_default().extend([a, b]);
                }
            }
        }
        by_route.insert(a, mine);
    }
    (by_route, by_node)
}
