//! Directed network model, random deployment generation, and hop-count
//! routing toward the gateway.
//!
//! Nodes are numbered `0..n` and edges `0..m`. Every edge is a lossless
//! directed link with an integer capacity in bits per channel use. One node
//! is the gateway that collects all traffic; deployments are only valid
//! when every node has a directed path to it.

use std::collections::VecDeque;
use std::fmt::Write as _;

use rand::Rng;
use thiserror::Error;

use crate::seeds;

pub type NodeId = usize;
pub type EdgeId = usize;

/// Attempts made before random deployment generation gives up on finding a
/// connected graph.
pub const CONNECTIVITY_RETRY_BUDGET: usize = 100;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("a deployment needs at least 2 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("{requested} edges exceed the simple-digraph maximum {max} for {n_nodes} nodes")]
    TooManyEdges {
        requested: usize,
        max: usize,
        n_nodes: usize,
    },
    #[error("{requested} edges cannot connect {n_nodes} nodes to a gateway (need at least {})", n_nodes - 1)]
    TooFewEdges { requested: usize, n_nodes: usize },
    #[error(
        "no fully connected deployment found in {attempts} attempts \
         (n_nodes={n_nodes}, n_edges={n_edges}, seed={seed})"
    )]
    RetryBudgetExhausted {
        attempts: usize,
        n_nodes: usize,
        n_edges: usize,
        seed: u64,
    },
    #[error("node {0} has no directed path to the gateway")]
    Unreachable(NodeId),
    #[error("invalid edge {id}: {reason}")]
    InvalidEdge { id: EdgeId, reason: String },
    #[error("gateway {0} is out of range or has no incoming edge")]
    InvalidGateway(NodeId),
    #[error("edge-list parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// A directed capacitated link.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub id: EdgeId,
    pub tail: NodeId,
    pub head: NodeId,
    /// Capacity in bits per channel use; at least 1.
    pub capacity: u32,
}

/// Directed multigraph with per-edge capacities and a designated gateway.
///
/// Immutable after construction, so it can be shared freely across
/// parallel experiment workers.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGraph {
    n_nodes: usize,
    edges: Vec<Edge>,
    gateway: NodeId,
    in_edges: Vec<Vec<EdgeId>>,
    out_edges: Vec<Vec<EdgeId>>,
}

impl NetworkGraph {
    /// Builds a graph from `(tail, head, capacity)` triples; edge ids are
    /// assigned in list order.
    pub fn new(
        n_nodes: usize,
        edge_list: Vec<(NodeId, NodeId, u32)>,
        gateway: NodeId,
    ) -> Result<Self, GraphError> {
        if n_nodes < 2 {
            return Err(GraphError::TooFewNodes(n_nodes));
        }
        let mut edges = Vec::with_capacity(edge_list.len());
        let mut in_edges = vec![Vec::new(); n_nodes];
        let mut out_edges = vec![Vec::new(); n_nodes];
        for (id, (tail, head, capacity)) in edge_list.into_iter().enumerate() {
            if tail >= n_nodes || head >= n_nodes {
                return Err(GraphError::InvalidEdge {
                    id,
                    reason: format!("endpoint out of range ({tail} -> {head}, n={n_nodes})"),
                });
            }
            if tail == head {
                return Err(GraphError::InvalidEdge {
                    id,
                    reason: format!("self-loop at node {tail}"),
                });
            }
            if capacity == 0 {
                return Err(GraphError::InvalidEdge {
                    id,
                    reason: "capacity must be at least 1".into(),
                });
            }
            edges.push(Edge {
                id,
                tail,
                head,
                capacity,
            });
            out_edges[tail].push(id);
            in_edges[head].push(id);
        }
        if gateway >= n_nodes || in_edges[gateway].is_empty() {
            return Err(GraphError::InvalidGateway(gateway));
        }
        Ok(Self {
            n_nodes,
            edges,
            gateway,
            in_edges,
            out_edges,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn gateway(&self) -> NodeId {
        self.gateway
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, e: EdgeId) -> &Edge {
        &self.edges[e]
    }

    pub fn tail(&self, e: EdgeId) -> NodeId {
        self.edges[e].tail
    }

    pub fn head(&self, e: EdgeId) -> NodeId {
        self.edges[e].head
    }

    /// Incoming edge ids of `v`, ascending.
    pub fn in_edges(&self, v: NodeId) -> &[EdgeId] {
        &self.in_edges[v]
    }

    /// Outgoing edge ids of `v`, ascending.
    pub fn out_edges(&self, v: NodeId) -> &[EdgeId] {
        &self.out_edges[v]
    }

    /// Incoming edges of the gateway, ascending; this fixes the row order of
    /// every measurement vector.
    pub fn gateway_in_edges(&self) -> &[EdgeId] {
        &self.in_edges[self.gateway]
    }

    /// Plain-text edge list: header `n m gateway`, then one
    /// `edge_id tail head capacity` line per edge.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} {} {}",
            self.n_nodes,
            self.edges.len(),
            self.gateway
        );
        for e in &self.edges {
            let _ = writeln!(out, "{} {} {} {}", e.id, e.tail, e.head, e.capacity);
        }
        out
    }

    /// Parses the format produced by [`NetworkGraph::to_edge_list`].
    pub fn from_edge_list(text: &str) -> Result<Self, GraphError> {
        let parse = |line: usize, tok: &str| -> Result<usize, GraphError> {
            tok.parse().map_err(|_| GraphError::Parse {
                line,
                msg: format!("expected integer, got `{tok}`"),
            })
        };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (lno, header) = lines.next().ok_or(GraphError::Parse {
            line: 1,
            msg: "missing header".into(),
        })?;
        let head: Vec<&str> = header.split_whitespace().collect();
        if head.len() != 3 {
            return Err(GraphError::Parse {
                line: lno + 1,
                msg: "header must be `n m gateway`".into(),
            });
        }
        let n = parse(lno + 1, head[0])?;
        let m = parse(lno + 1, head[1])?;
        let gateway = parse(lno + 1, head[2])?;
        let mut edge_list = vec![None; m];
        for (lno, line) in lines {
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != 4 {
                return Err(GraphError::Parse {
                    line: lno + 1,
                    msg: "edge line must be `edge_id tail head capacity`".into(),
                });
            }
            let id = parse(lno + 1, toks[0])?;
            if id >= m || edge_list[id].is_some() {
                return Err(GraphError::Parse {
                    line: lno + 1,
                    msg: format!("bad or duplicate edge id {id}"),
                });
            }
            edge_list[id] = Some((
                parse(lno + 1, toks[1])?,
                parse(lno + 1, toks[2])?,
                parse(lno + 1, toks[3])? as u32,
            ));
        }
        let mut resolved = Vec::with_capacity(m);
        for (id, e) in edge_list.into_iter().enumerate() {
            resolved.push(e.ok_or(GraphError::Parse {
                line: 0,
                msg: format!("edge id {id} missing"),
            })?);
        }
        Self::new(n, resolved, gateway)
    }
}

/// True when every node can reach `gateway` along directed edges.
fn all_reach_gateway(n_nodes: usize, edges: &[(NodeId, NodeId, u32)], gateway: NodeId) -> bool {
    // BFS from the gateway over reversed edges.
    let mut rev = vec![Vec::new(); n_nodes];
    for &(tail, head, _) in edges {
        rev[head].push(tail);
    }
    let mut seen = vec![false; n_nodes];
    seen[gateway] = true;
    let mut queue = VecDeque::from([gateway]);
    let mut count = 1;
    while let Some(v) = queue.pop_front() {
        for &u in &rev[v] {
            if !seen[u] {
                seen[u] = true;
                count += 1;
                queue.push_back(u);
            }
        }
    }
    count == n_nodes
}

/// Generates a random deployment: `n_edges` distinct directed pairs drawn
/// uniformly without replacement over the simple digraph on `n_nodes`
/// nodes, a uniformly chosen gateway, and the given capacity on every
/// edge. Deployments in which some node cannot reach the gateway are
/// redrawn, up to [`CONNECTIVITY_RETRY_BUDGET`] attempts.
pub fn generate_random_network(
    n_nodes: usize,
    n_edges: usize,
    capacity: u32,
    seed: u64,
) -> Result<NetworkGraph, GraphError> {
    if n_nodes < 2 {
        return Err(GraphError::TooFewNodes(n_nodes));
    }
    let max = n_nodes * (n_nodes - 1);
    if n_edges > max {
        return Err(GraphError::TooManyEdges {
            requested: n_edges,
            max,
            n_nodes,
        });
    }
    if n_edges < n_nodes - 1 {
        return Err(GraphError::TooFewEdges {
            requested: n_edges,
            n_nodes,
        });
    }
    let mut rng = seeds::rng_for(seed, &[]);
    let mut pairs: Vec<(NodeId, NodeId)> = Vec::with_capacity(max);
    for tail in 0..n_nodes {
        for head in 0..n_nodes {
            if tail != head {
                pairs.push((tail, head));
            }
        }
    }
    for attempt in 0..CONNECTIVITY_RETRY_BUDGET {
        let gateway = rng.gen_range(0..n_nodes);
        // Partial Fisher-Yates: the first n_edges entries are a uniform
        // sample without replacement.
        for i in 0..n_edges {
            let j = rng.gen_range(i..max);
            pairs.swap(i, j);
        }
        let edge_list: Vec<(NodeId, NodeId, u32)> = pairs[..n_edges]
            .iter()
            .map(|&(t, h)| (t, h, capacity))
            .collect();
        if all_reach_gateway(n_nodes, &edge_list, gateway) {
            return NetworkGraph::new(n_nodes, edge_list, gateway);
        }
        let _ = attempt;
    }
    Err(GraphError::RetryBudgetExhausted {
        attempts: CONNECTIVITY_RETRY_BUDGET,
        n_nodes,
        n_edges,
        seed,
    })
}

/// Hop-count shortest paths from every node to the gateway.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoutingTable {
    /// Per node, the first edge of a hop-minimal path; `None` for the gateway.
    next_hop: Vec<Option<EdgeId>>,
    dist: Vec<usize>,
}

impl RoutingTable {
    pub fn dist(&self, v: NodeId) -> usize {
        self.dist[v]
    }

    pub fn next_hop(&self, v: NodeId) -> Option<EdgeId> {
        self.next_hop[v]
    }
}

/// Computes hop-minimal routes to the gateway. Ties are broken by the
/// smallest edge id, so the table is deterministic for a given graph.
pub fn shortest_paths_to_gateway(g: &NetworkGraph) -> Result<RoutingTable, GraphError> {
    let n = g.n_nodes();
    let unreached = usize::MAX;
    let mut dist = vec![unreached; n];
    dist[g.gateway()] = 0;
    let mut queue = VecDeque::from([g.gateway()]);
    while let Some(v) = queue.pop_front() {
        for &e in g.in_edges(v) {
            let u = g.tail(e);
            if dist[u] == unreached {
                dist[u] = dist[v] + 1;
                queue.push_back(u);
            }
        }
    }
    if let Some(v) = (0..n).find(|&v| dist[v] == unreached) {
        return Err(GraphError::Unreachable(v));
    }
    let mut next_hop = vec![None; n];
    for v in 0..n {
        if v == g.gateway() {
            continue;
        }
        next_hop[v] = g
            .out_edges(v)
            .iter()
            .copied()
            .find(|&e| dist[g.head(e)] + 1 == dist[v]);
        debug_assert!(next_hop[v].is_some());
    }
    Ok(RoutingTable { next_hop, dist })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent reachability oracle: iterate "v reaches gateway" to a
    /// fixpoint without any queue bookkeeping.
    fn reaches_gateway_fixpoint(g: &NetworkGraph) -> Vec<bool> {
        let mut ok = vec![false; g.n_nodes()];
        ok[g.gateway()] = true;
        loop {
            let mut changed = false;
            for e in g.edges() {
                if ok[e.head] && !ok[e.tail] {
                    ok[e.tail] = true;
                    changed = true;
                }
            }
            if !changed {
                return ok;
            }
        }
    }

    /// Independent Bellman-Ford hop counts toward the gateway.
    fn bellman_ford_dist(g: &NetworkGraph) -> Vec<usize> {
        let inf = usize::MAX / 2;
        let mut dist = vec![inf; g.n_nodes()];
        dist[g.gateway()] = 0;
        for _ in 0..g.n_nodes() {
            for e in g.edges() {
                if dist[e.head] + 1 < dist[e.tail] {
                    dist[e.tail] = dist[e.head] + 1;
                }
            }
        }
        dist
    }

    #[test]
    fn two_nodes_two_edges_is_forced() {
        let g = generate_random_network(2, 2, 1, 123).unwrap();
        let mut pairs: Vec<(usize, usize)> = g.edges().iter().map(|e| (e.tail, e.head)).collect();
        pairs.sort_unstable();
        assert_eq!(pairs, vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn rejects_more_edges_than_simple_digraph_allows() {
        let err = generate_random_network(4, 13, 1, 0).unwrap_err();
        assert!(matches!(err, GraphError::TooManyEdges { max: 12, .. }));
    }

    #[test]
    fn rejects_edge_counts_that_cannot_connect() {
        let err = generate_random_network(10, 5, 1, 0).unwrap_err();
        assert!(matches!(err, GraphError::TooFewEdges { .. }));
    }

    #[test]
    fn generated_network_reaches_gateway() {
        let g = generate_random_network(100, 400, 1, 7).unwrap();
        assert_eq!(g.n_nodes(), 100);
        assert_eq!(g.n_edges(), 400);
        let ok = reaches_gateway_fixpoint(&g);
        assert!(ok.iter().all(|&b| b));
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_random_network(30, 120, 1, 99).unwrap();
        let b = generate_random_network(30, 120, 1, 99).unwrap();
        assert_eq!(a.to_edge_list(), b.to_edge_list());
        let c = generate_random_network(30, 120, 1, 100).unwrap();
        assert_ne!(a.to_edge_list(), c.to_edge_list());
    }

    #[test]
    fn in_out_queries_are_consistent() {
        let g = generate_random_network(25, 100, 1, 5).unwrap();
        for e in g.edges() {
            assert!(g.in_edges(e.head).contains(&e.id));
            assert!(g.out_edges(e.tail).contains(&e.id));
        }
        let total_in: usize = (0..g.n_nodes()).map(|v| g.in_edges(v).len()).sum();
        assert_eq!(total_in, g.n_edges());
    }

    #[test]
    fn edge_list_round_trips() {
        let g = generate_random_network(20, 60, 2, 11).unwrap();
        let text = g.to_edge_list();
        let back = NetworkGraph::from_edge_list(&text).unwrap();
        assert_eq!(g, back);
        assert_eq!(back.to_edge_list(), text);
    }

    #[test]
    fn single_edge_route() {
        let g = NetworkGraph::new(2, vec![(0, 1, 1)], 1).unwrap();
        let routes = shortest_paths_to_gateway(&g).unwrap();
        assert_eq!(routes.dist(0), 1);
        assert_eq!(routes.dist(1), 0);
        assert_eq!(routes.next_hop(0), Some(0));
        assert_eq!(routes.next_hop(1), None);
    }

    #[test]
    fn chain_distances() {
        let g = NetworkGraph::new(3, vec![(0, 1, 1), (1, 2, 1)], 2).unwrap();
        let routes = shortest_paths_to_gateway(&g).unwrap();
        assert_eq!((routes.dist(0), routes.dist(1), routes.dist(2)), (2, 1, 0));
    }

    #[test]
    fn unreachable_node_is_named() {
        // Node 2 has no outgoing edges at all.
        let g = NetworkGraph::new(3, vec![(0, 1, 1), (1, 0, 1)], 1).unwrap();
        match shortest_paths_to_gateway(&g) {
            Err(GraphError::Unreachable(2)) => {}
            other => panic!("expected Unreachable(2), got {other:?}"),
        }
    }

    #[test]
    fn routes_match_bellman_ford() {
        let g = generate_random_network(20, 60, 1, 31).unwrap();
        let routes = shortest_paths_to_gateway(&g).unwrap();
        let oracle = bellman_ford_dist(&g);
        for v in 0..g.n_nodes() {
            assert_eq!(routes.dist(v), oracle[v], "node {v}");
        }
    }

    #[test]
    fn following_next_hop_reaches_gateway_in_dist_steps() {
        let g = generate_random_network(40, 200, 1, 17).unwrap();
        let routes = shortest_paths_to_gateway(&g).unwrap();
        for v in 0..g.n_nodes() {
            let mut cur = v;
            let mut hops = 0;
            while cur != g.gateway() {
                let e = routes.next_hop(cur).expect("non-gateway node has a hop");
                assert_eq!(g.tail(e), cur);
                cur = g.head(e);
                hops += 1;
                assert!(hops <= g.n_nodes());
            }
            assert_eq!(hops, routes.dist(v));
        }
    }

    #[test]
    fn dist_is_a_relaxation_fixpoint() {
        let g = generate_random_network(30, 150, 1, 23).unwrap();
        let routes = shortest_paths_to_gateway(&g).unwrap();
        for e in g.edges() {
            assert!(routes.dist(e.tail) <= routes.dist(e.head) + 1);
        }
    }

    #[test]
    fn ties_break_on_smallest_edge_id() {
        // Two parallel-length routes 0->1->3 and 0->2->3; edges from 0 are
        // ids 0 and 1, so id 0 must win.
        let g = NetworkGraph::new(4, vec![(0, 1, 1), (0, 2, 1), (1, 3, 1), (2, 3, 1)], 3).unwrap();
        let routes = shortest_paths_to_gateway(&g).unwrap();
        assert_eq!(routes.next_hop(0), Some(0));
    }
}
