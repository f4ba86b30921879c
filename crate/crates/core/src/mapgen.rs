//! Regular polytunnel layouts: rows of narrow corridors whose ends meet two
//! header corridors, one per tunnel end, chained across every row and tunnel.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topomap::{NodeId, TopoEdge, TopoMap, TopoNode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolytunnelParams {
    pub n_tunnels: usize,
    pub rows_per_tunnel: usize,
    pub nodes_per_row: usize,
    pub row_spacing: f64,
    pub node_spacing: f64,
    pub header_speed_limit: f64,
    pub row_speed_limit: f64,
    pub envelope: f64,
    #[serde(default = "default_true")]
    pub bidirectional_rows: bool,
}

fn default_true() -> bool {
    true
}

impl Default for PolytunnelParams {
    fn default() -> Self {
        PolytunnelParams {
            n_tunnels: 1,
            rows_per_tunnel: 4,
            nodes_per_row: 5,
            row_spacing: 2.0,
            node_spacing: 4.0,
            header_speed_limit: 1.0,
            row_speed_limit: 1.0,
            envelope: 1.0,
            bidirectional_rows: true,
        }
    }
}

impl PolytunnelParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_tunnels == 0 || self.rows_per_tunnel == 0 || self.nodes_per_row == 0 {
            return Err(Error::Config("tunnel, row and node counts must be at least 1".into()));
        }
        for (name, v) in [
            ("row_spacing", self.row_spacing),
            ("node_spacing", self.node_spacing),
            ("header_speed_limit", self.header_speed_limit),
            ("row_speed_limit", self.row_speed_limit),
            ("envelope", self.envelope),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    /// Node count of the generated map: row nodes plus one header node per row end.
    pub fn expected_node_count(&self) -> usize {
        let rows = self.n_tunnels * self.rows_per_tunnel;
        rows * self.nodes_per_row + 2 * rows
    }
}

/// Header node ids start with `h`; the fleet's automatic start placement uses this.
pub fn header_id(end: char, tunnel: usize, row: usize) -> NodeId {
    NodeId(format!("h{end}_t{tunnel}_r{row:03}"))
}

pub fn row_node_id(tunnel: usize, row: usize, k: usize) -> NodeId {
    NodeId(format!("t{tunnel}_r{row:03}_n{k:03}"))
}

struct Builder {
    nodes: Vec<TopoNode>,
    edges: Vec<TopoEdge>,
    envelope: f64,
}

impl Builder {
    fn node(&mut self, id: NodeId, x: f64, y: f64) {
        self.nodes.push(TopoNode { id, x, y });
    }

    fn arc(&mut self, from: &NodeId, to: &NodeId, length: f64, speed_limit: f64) {
        self.edges.push(TopoEdge {
            from: from.clone(),
            to: to.clone(),
            length,
            speed_limit,
            envelope: self.envelope,
        });
    }

    fn pair(&mut self, a: &NodeId, b: &NodeId, length: f64, speed_limit: f64) {
        self.arc(a, b, length, speed_limit);
        self.arc(b, a, length, speed_limit);
    }
}

fn build(params: &PolytunnelParams) -> Result<(Builder, Vec<NodeId>, Vec<NodeId>)> {
    params.validate()?;
    let p = params;
    let mut b = Builder { nodes: Vec::new(), edges: Vec::new(), envelope: p.envelope };
    let row_len = (p.nodes_per_row + 1) as f64 * p.node_spacing;
    let mut header_a = Vec::new();
    let mut header_b = Vec::new();

    for t in 0..p.n_tunnels {
        for r in 0..p.rows_per_tunnel {
            let x = (t * p.rows_per_tunnel + r) as f64 * p.row_spacing;
            let ha = header_id('a', t, r);
            let hb = header_id('b', t, r);
            b.node(ha.clone(), x, 0.0);
            b.node(hb.clone(), x, row_len);
            let mut chain = vec![ha.clone()];
            for k in 0..p.nodes_per_row {
                let id = row_node_id(t, r, k);
                b.node(id.clone(), x, (k + 1) as f64 * p.node_spacing);
                chain.push(id);
            }
            chain.push(hb.clone());
            let global_row = t * p.rows_per_tunnel + r;
            for w in chain.windows(2) {
                if p.bidirectional_rows {
                    b.pair(&w[0], &w[1], p.node_spacing, p.row_speed_limit);
                } else if global_row % 2 == 0 {
                    b.arc(&w[0], &w[1], p.node_spacing, p.row_speed_limit);
                } else {
                    b.arc(&w[1], &w[0], p.node_spacing, p.row_speed_limit);
                }
            }
            header_a.push(ha);
            header_b.push(hb);
        }
    }
    for header in [&header_a, &header_b] {
        for w in header.windows(2) {
            b.pair(&w[0], &w[1], p.row_spacing, p.header_speed_limit);
        }
    }
    Ok((b, header_a, header_b))
}

/// Deterministic polytunnel map for the given parameters.
pub fn generate_polytunnel(params: &PolytunnelParams) -> Result<TopoMap> {
    let (b, _, _) = build(params)?;
    let name = format!(
        "polytunnel_{}x{}x{}",
        params.n_tunnels, params.rows_per_tunnel, params.nodes_per_row
    );
    TopoMap::new(name, b.nodes, b.edges)
}

/// Parameters of the reference-scale farm layout.
pub fn reference_params() -> PolytunnelParams {
    PolytunnelParams {
        n_tunnels: 4,
        rows_per_tunnel: 20,
        nodes_per_row: 3,
        row_spacing: 3.0,
        node_spacing: 3.0,
        header_speed_limit: 1.0,
        row_speed_limit: 1.0,
        envelope: 1.0,
        bidirectional_rows: true,
    }
}

/// Number of nodes on the packhouse loop of the reference layout.
pub const PACKHOUSE_NODES: usize = 15;
/// Spacing of packhouse loop nodes, metres.
pub const PACKHOUSE_SPACING: f64 = 23.0;

/// Four tunnels plus a packhouse route, sized like a commercial farm map
/// (about 414 nodes, 1050 directed edges, 3.6 km of directed edge length).
pub fn generate_reference_scale() -> TopoMap {
    generate_with_packhouse(&reference_params(), PACKHOUSE_NODES, PACKHOUSE_SPACING).expect("reference map is valid")
}

/// A polytunnel map plus a packhouse route: a chain of `nodes` nodes,
/// `spacing` metres apart, leaving the far end of header a and returning to
/// the far end of header b, so it has no dead end.
pub fn generate_with_packhouse(params: &PolytunnelParams, nodes: usize, spacing: f64) -> Result<TopoMap> {
    if !(spacing > 0.0) || !spacing.is_finite() {
        return Err(Error::Config("packhouse spacing must be positive".into()));
    }
    let (mut b, header_a, header_b) = build(params)?;
    let last_a = header_a.last().unwrap().clone();
    let last_b = header_b.last().unwrap().clone();
    let x0 = b.nodes.iter().find(|n| n.id == last_a).unwrap().x;
    let y_b = b.nodes.iter().find(|n| n.id == last_b).unwrap().y;

    let ids: Vec<NodeId> = (0..nodes).map(|i| NodeId(format!("p_{i:03}"))).collect();
    // laid out along a U: out from header a, across, and back to header b
    let span = (nodes + 1) as f64 * spacing;
    let reach = ((span - y_b) / 2.0).max(0.0);
    for (i, id) in ids.iter().enumerate() {
        let s = (i + 1) as f64 * spacing;
        let (x, y) = if s <= reach {
            (x0 + s, 0.0)
        } else if s <= reach + y_b {
            (x0 + reach, s - reach)
        } else {
            (x0 + reach - (s - reach - y_b), y_b)
        };
        b.node(id.clone(), x, y);
    }
    let mut chain = vec![last_a];
    chain.extend(ids);
    chain.push(last_b);
    for w in chain.windows(2) {
        b.pair(&w[0], &w[1], spacing, params.header_speed_limit);
    }
    TopoMap::new("reference_farm", b.nodes, b.edges)
}
