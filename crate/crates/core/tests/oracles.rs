// Algorithm outputs checked against brute-force oracles written here, away
// from the library code they judge.

mod common;

use std::collections::{BTreeMap, BTreeSet};

use common::*;
use mrpp_core::fleet::{assign_task, Agent};
use mrpp_core::mapgen::{generate_polytunnel, generate_reference_scale, PolytunnelParams};
use mrpp_core::planners::fragment::{fp_assign_fragments, fp_get_critical_points, FpVariant};
use mrpp_core::topomap::{articulation_points, corridor_stats, route_search, support_neighbours, NodeIx, Route, TopoMap, Weight};
use mrpp_core::Fleet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn route_search_matches_path_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut with_route = 0;
    for case in 0..100 {
        let n = rng.random_range(2..=12);
        let p = rng.random_range(0.15..0.5);
        let map = random_digraph(&mut rng, n, p);
        let s = rng.random_range(0..n);
        let g = rng.random_range(0..n);
        let got = route_search(&map, map.node_id(s), map.node_id(g), Weight::Distance).unwrap();
        let want = enumerate_best(&map, s, g, |p| path_length(&map, p));
        assert_eq!(got.map(|r| r.nodes), want, "case {case}: {s} -> {g}");
        with_route += usize::from(s != g && route_search(&map, map.node_id(s), map.node_id(g), Weight::Distance).unwrap().is_some());

        let speed = 1.5;
        let got = route_search(&map, map.node_id(s), map.node_id(g), Weight::Time { agent_speed: speed }).unwrap();
        let want = enumerate_best(&map, s, g, |p| {
            p.windows(2)
                .map(|w| {
                    let e = map.edge(map.edge_between(w[0], w[1]).unwrap());
                    e.length / e.speed_limit.min(speed)
                })
                .sum()
        });
        assert_eq!(got.map(|r| r.nodes), want, "case {case} (time): {s} -> {g}");
    }
    // the random instances must exercise actual searches, not just misses
    assert!(with_route > 40, "{with_route}");
}

#[test]
fn recorded_optimum_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut checked = 0;
    while checked < 50 {
        let n = rng.random_range(3..=10);
        let extra = rng.random_range(0..n);
        let map = random_connected(&mut rng, n, extra);
        let s = rng.random_range(0..n);
        let g = rng.random_range(0..n);
        if s == g {
            continue;
        }
        let mut agent = Agent::new("a", 1.0, 0.5, s);
        let task = assign_task(&mut agent, 0, g, 0.0, &map).unwrap().unwrap();
        let best = all_simple_paths(&map, s, g).iter().map(|p| path_length(&map, p)).fold(f64::INFINITY, f64::min);
        assert_eq!(task.d_opt, best);
        checked += 1;
    }
}

/// Cut vertices by deletion: a node is one when removing it raises the number
/// of connected components of the undirected support graph.
fn removal_oracle(map: &TopoMap) -> Vec<NodeIx> {
    let n = map.node_count();
    let mut adj = vec![BTreeSet::new(); n];
    for e in 0..map.edge_count() {
        let (f, t) = map.edge_ends(e);
        adj[f].insert(t);
        adj[t].insert(f);
    }
    let components = |removed: Option<NodeIx>| {
        let mut seen = vec![false; n];
        let mut count = 0;
        for start in 0..n {
            if seen[start] || Some(start) == removed {
                continue;
            }
            count += 1;
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(v) = stack.pop() {
                for &w in &adj[v] {
                    if !seen[w] && Some(w) != removed {
                        seen[w] = true;
                        stack.push(w);
                    }
                }
            }
        }
        count
    };
    let base = components(None);
    (0..n).filter(|&v| components(Some(v)) > base).collect()
}

#[test]
fn articulation_points_match_removal_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..60 {
        let n = rng.random_range(1..=14);
        let p = rng.random_range(0.05..0.3);
        let map = random_digraph(&mut rng, n, p);
        let mut got = articulation_points(&support_neighbours(&map));
        got.sort_unstable();
        assert_eq!(got, removal_oracle(&map));
    }
    let params = PolytunnelParams { n_tunnels: 4, rows_per_tunnel: 3, nodes_per_row: 3, ..Default::default() };
    for map in [generate_polytunnel(&params).unwrap(), generate_reference_scale()] {
        let oracle = removal_oracle(&map);
        let mut got = articulation_points(&support_neighbours(&map));
        got.sort_unstable();
        assert_eq!(got, oracle);
        assert_eq!(corridor_stats(&map).articulation_count, oracle.len());
    }
}

#[test]
fn generated_node_counts_follow_closed_form() {
    for (t, r, k) in [(2, 2, 2), (1, 1, 1), (4, 20, 3), (3, 5, 7)] {
        let params = PolytunnelParams { n_tunnels: t, rows_per_tunnel: r, nodes_per_row: k, ..Default::default() };
        let map = generate_polytunnel(&params).unwrap();
        assert_eq!(map.node_count(), t * r * k + 2 * t * r);
        // rows and headers are two-way chains
        assert_eq!(map.edge_count(), 2 * (t * r * (k + 1) + 2 * (t * r - 1)));
    }
}

#[test]
fn generated_maps_are_corridor_dominated() {
    for t in 1..=4 {
        for r in [1, 2, 5, 20] {
            for k in 3..=6 {
                let params = PolytunnelParams { n_tunnels: t, rows_per_tunnel: r, nodes_per_row: k, ..Default::default() };
                let stats = corridor_stats(&generate_polytunnel(&params).unwrap());
                assert!(stats.frac_deg_le_2 >= 0.6, "{t}x{r}x{k}: {}", stats.frac_deg_le_2);
            }
        }
    }
}

#[test]
fn critical_points_match_pairwise_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut shared = 0;
    for _ in 0..50 {
        let n = rng.random_range(3..=12);
        let extra = rng.random_range(0..4);
        let map = random_connected(&mut rng, n, extra);
        let mut routes = BTreeMap::new();
        for a in 0..rng.random_range(1..=5) {
            let s = rng.random_range(0..n);
            let g = rng.random_range(0..n);
            let r = route_search(&map, map.node_id(s), map.node_id(g), Weight::Distance).unwrap().unwrap();
            routes.insert(a * 3, r);
        }
        let got = fp_get_critical_points(&routes);
        let (by_route, by_node) = critical_oracle(&routes);
        assert_eq!(got.cp_by_route, by_route);
        assert_eq!(got.agents_by_cp, by_node);
        shared += by_node.len();
    }
    assert!(shared > 50);
}

/// Head-on pair on the corridor A B C D E. Hand trace of the greedy walk:
/// every node is on both routes. Distances along the routes: A a0 b4, B a1 b3,
/// C a2 b2 (tie, lower id a), D a3 b1, E a4 b0. a walks A B C (owned) and
/// stops at D (b's). b walks E D (owned) and stops at C (a's).
#[test]
fn head_on_corridor_trace() {
    let map = corridor(5);
    let (a_ix, e_ix) = (0, 4);
    let mut a = Agent::new("a", 1.0, 0.5, a_ix);
    a.install_route(Route::new(vec![0, 1, 2, 3, 4]));
    let mut b = Agent::new("b", 1.0, 0.5, e_ix);
    b.install_route(Route::new(vec![4, 3, 2, 1, 0]));
    let fleet = Fleet::new(vec![a, b]).unwrap();
    let routes: BTreeMap<usize, Route> = (0..2).map(|i| (i, fleet.agents[i].route.clone())).collect();
    let cpi = fp_get_critical_points(&routes);
    assert_eq!(cpi.cp_by_route[&0], (0..5).collect());

    for variant in [FpVariant::SpaceOnly, FpVariant::SpaceTime] {
        let f = fp_assign_fragments(&cpi, &routes, &fleet, &map, variant);
        let nodes = |i: usize| f[&i].fragments.iter().map(|fr| fr.nodes.clone()).collect::<Vec<_>>();
        assert_eq!(nodes(0), vec![vec![0, 1, 2], vec![3]]);
        assert_eq!(nodes(1), vec![vec![4, 3], vec![2]]);
        assert_eq!(f[&0].executable(), &[0, 1, 2]);
        assert_eq!(f[&1].executable(), &[4, 3]);
    }
}

/// Same corridor, but b drives at 4 m/s. Space-time ownership follows
/// arrival time: b takes D, C and B (0.25, 0.5, 0.75 s against 3, 2, 1 s),
/// a keeps only A. Space-only still ties on C and gives it to a.
#[test]
fn head_on_corridor_time_aware() {
    let map = corridor(5);
    let mut a = Agent::new("a", 1.0, 0.5, 0);
    a.install_route(Route::new(vec![0, 1, 2, 3, 4]));
    let mut b = Agent::new("b", 4.0, 0.5, 4);
    b.install_route(Route::new(vec![4, 3, 2, 1, 0]));
    let fleet = Fleet::new(vec![a, b]).unwrap();
    let routes: BTreeMap<usize, Route> = (0..2).map(|i| (i, fleet.agents[i].route.clone())).collect();
    let cpi = fp_get_critical_points(&routes);
    let f = fp_assign_fragments(&cpi, &routes, &fleet, &map, FpVariant::SpaceTime);
    assert_eq!(f[&0].executable(), &[0]);
    assert_eq!(f[&1].executable(), &[4, 3, 2, 1]);
    let f = fp_assign_fragments(&cpi, &routes, &fleet, &map, FpVariant::SpaceOnly);
    assert_eq!(f[&0].executable(), &[0, 1, 2]);
}
