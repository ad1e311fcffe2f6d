//! Per-agent time expansion graphs.
//!
//! A TEG of depth `mu` copies the admitted vertices into layers `0..=mu` and
//! connects consecutive layers by graph edges and wait loops. Non-wait edges
//! whose destination layer lies beyond the agent's shortest-path cost are
//! *extra* edges; only those can push the agent's cost above its lower bound.

use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::instance::{Graph, VertexId, UNREACHABLE};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TegError {
    #[error("depth {mu} is below the agent's shortest-path cost {xi0}")]
    DepthBelowLowerBound { mu: usize, xi0: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeKind {
    Standard,
    Extra,
}

/// Directed edge from `(from, t)` to `(to, t + 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TegEdge {
    pub t: usize,
    pub from: VertexId,
    pub to: VertexId,
    pub kind: EdgeKind,
}

impl TegEdge {
    pub fn is_wait(&self) -> bool {
        self.from == self.to
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Teg {
    depth: usize,
    xi0: usize,
    start: VertexId,
    goal: VertexId,
    layers: Vec<Vec<VertexId>>,
    // Edges leaving layer t, sorted by (from, to).
    edges: Vec<Vec<TegEdge>>,
}

impl Teg {
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn xi0(&self) -> usize {
        self.xi0
    }

    pub fn start(&self) -> VertexId {
        self.start
    }

    pub fn goal(&self) -> VertexId {
        self.goal
    }

    /// Admitted vertices at time `t`, ascending.
    pub fn layer(&self, t: usize) -> &[VertexId] {
        &self.layers[t]
    }

    pub fn layers(&self) -> &[Vec<VertexId>] {
        &self.layers
    }

    pub fn admits(&self, t: usize, v: VertexId) -> bool {
        self.layers
            .get(t)
            .is_some_and(|layer| layer.binary_search(&v).is_ok())
    }

    /// Edges from layer `t` to layer `t + 1`, sorted by `(from, to)`.
    pub fn edges_from_layer(&self, t: usize) -> &[TegEdge] {
        &self.edges[t]
    }

    /// Edges leaving `(v, t)`.
    pub fn outgoing(&self, t: usize, v: VertexId) -> &[TegEdge] {
        let edges = &self.edges[t];
        let lo = edges.partition_point(|e| e.from < v);
        let hi = edges.partition_point(|e| e.from <= v);
        &edges[lo..hi]
    }

    pub fn edges(&self) -> impl Iterator<Item = &TegEdge> {
        self.edges.iter().flatten()
    }

    pub fn std_edges(&self) -> impl Iterator<Item = &TegEdge> {
        self.edges().filter(|e| e.kind == EdgeKind::Standard)
    }

    pub fn extra_edges(&self) -> impl Iterator<Item = &TegEdge> {
        self.edges().filter(|e| e.kind == EdgeKind::Extra)
    }

    pub fn vertex_count(&self) -> usize {
        self.layers.iter().map(Vec::len).sum()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.iter().map(Vec::len).sum()
    }

    /// Whether any extra edge leaves layer `t`.
    pub fn has_extra_from(&self, t: usize) -> bool {
        self.edges[t].iter().any(|e| e.kind == EdgeKind::Extra)
    }

    /// Layered edge list, one `t from to {std|extra}` line per edge.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for e in self.edges() {
            let kind = match e.kind {
                EdgeKind::Standard => "std",
                EdgeKind::Extra => "extra",
            };
            let _ = writeln!(out, "{} {} {} {}", e.t, e.from, e.to, kind);
        }
        out
    }
}

impl fmt::Display for Teg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.dump())
    }
}

fn classify(t: usize, from: VertexId, to: VertexId, xi0: usize) -> EdgeKind {
    if from != to && t + 1 > xi0 {
        EdgeKind::Extra
    } else {
        EdgeKind::Standard
    }
}

fn assemble(
    graph: &Graph,
    mu: usize,
    xi0: usize,
    start: VertexId,
    goal: VertexId,
    layers: Vec<Vec<VertexId>>,
) -> Teg {
    let mut admitted = vec![false; graph.vertex_count()];
    let mut edges = Vec::with_capacity(mu);
    for t in 0..mu {
        for &v in &layers[t + 1] {
            admitted[v] = true;
        }
        let mut out = Vec::new();
        for &u in &layers[t] {
            let mut push = |v: VertexId| {
                if admitted[v] {
                    out.push(TegEdge {
                        t,
                        from: u,
                        to: v,
                        kind: classify(t, u, v, xi0),
                    });
                }
            };
            // Keep (from, to) order: neighbours below u, the wait, neighbours above.
            let nbrs = graph.neighbors(u);
            let split = nbrs.partition_point(|&v| v < u);
            nbrs[..split].iter().for_each(|&v| push(v));
            push(u);
            nbrs[split..].iter().for_each(|&v| push(v));
        }
        for &v in &layers[t + 1] {
            admitted[v] = false;
        }
        edges.push(out);
    }
    Teg {
        depth: mu,
        xi0,
        start,
        goal,
        layers,
        edges,
    }
}

/// Full TEG: every graph vertex in every layer, wait loops everywhere.
pub fn build_teg(
    graph: &Graph,
    mu: usize,
    xi0: usize,
    start: VertexId,
    goal: VertexId,
) -> Result<Teg, TegError> {
    if mu < xi0 {
        return Err(TegError::DepthBelowLowerBound { mu, xi0 });
    }
    let all: Vec<VertexId> = (0..graph.vertex_count()).collect();
    let layers = vec![all; mu + 1];
    Ok(assemble(graph, mu, xi0, start, goal, layers))
}

/// TEG restricted to the agent's decision diagram for cost budget `xi0 + delta`.
///
/// Vertex `u` is admitted at time `t` when the agent can be there by `t` and
/// still reach its goal within the budget; after the budget is spent only the
/// goal remains, since the agent must already have finally arrived.
pub fn build_mdd_teg(
    graph: &Graph,
    mu: usize,
    xi0: usize,
    delta: usize,
    start: VertexId,
    goal: VertexId,
) -> Result<Teg, TegError> {
    if mu < xi0 {
        return Err(TegError::DepthBelowLowerBound { mu, xi0 });
    }
    let from_start = graph.bfs_distances(start);
    let to_goal = graph.bfs_distances(goal);
    let budget = xi0 + delta;
    let layers = (0..=mu)
        .map(|t| {
            let spent = t.min(budget);
            (0..graph.vertex_count())
                .filter(|&u| {
                    from_start[u] != UNREACHABLE
                        && to_goal[u] != UNREACHABLE
                        && from_start[u] as usize <= t
                        && spent + to_goal[u] as usize <= budget
                })
                .collect()
        })
        .collect();
    Ok(assemble(graph, mu, xi0, start, goal, layers))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn path3() -> Graph {
        Graph::new(3, [(0, 1), (1, 2)]).unwrap()
    }

    #[test]
    fn path_graph_counts() {
        let teg = build_teg(&path3(), 3, 2, 0, 2).unwrap();
        assert_eq!(teg.vertex_count(), 12);
        for t in 0..3 {
            assert_eq!(teg.edges_from_layer(t).len(), 7);
        }
        assert_eq!(teg.edge_count(), 21);
    }

    #[test]
    fn extra_edges_are_moves_into_layer_past_xi0() {
        let teg = build_teg(&path3(), 3, 2, 0, 2).unwrap();
        let extra: BTreeSet<(usize, usize, usize)> =
            teg.extra_edges().map(|e| (e.t, e.from, e.to)).collect();
        let expected: BTreeSet<_> = [(2, 0, 1), (2, 1, 0), (2, 1, 2), (2, 2, 1)].into();
        assert_eq!(extra, expected);
        assert!(teg.edges().filter(|e| e.is_wait()).all(|e| e.kind == EdgeKind::Standard));
        assert!(teg.has_extra_from(2));
        assert!(!teg.has_extra_from(1));
    }

    #[test]
    fn late_wait_is_not_an_extra_edge() {
        // Back off, wait, then go: arrival 5 against a lower bound of 2.
        let teg = build_teg(&path3(), 5, 2, 0, 2).unwrap();
        let plan = [0, 1, 0, 0, 1, 2];
        let used = plan
            .windows(2)
            .enumerate()
            .filter(|(t, w)| teg.outgoing(*t, w[0]).iter().any(|e| e.to == w[1] && e.kind == EdgeKind::Extra))
            .count();
        assert_eq!(used, 2);
        assert!(used <= 5 - 2);
    }

    #[test]
    fn no_extra_edges_at_lower_bound_depth() {
        let teg = build_teg(&path3(), 2, 2, 0, 2).unwrap();
        assert_eq!(teg.extra_edges().count(), 0);
    }

    #[test]
    fn depth_below_xi0_is_rejected() {
        assert_eq!(
            build_teg(&path3(), 1, 2, 0, 2),
            Err(TegError::DepthBelowLowerBound { mu: 1, xi0: 2 })
        );
        assert!(build_mdd_teg(&path3(), 1, 2, 0, 0, 2).is_err());
    }

    #[test]
    fn mdd_zero_slack_is_shortest_path_levels() {
        let teg = build_mdd_teg(&path3(), 2, 2, 0, 0, 2).unwrap();
        assert_eq!(teg.layers(), &[vec![0], vec![1], vec![2]]);
        assert_eq!(teg.edge_count(), 2);
    }

    #[test]
    fn mdd_layers_with_slack() {
        let teg = build_mdd_teg(&path3(), 3, 2, 1, 0, 2).unwrap();
        assert_eq!(teg.layer(0), &[0]);
        assert_eq!(teg.layer(1), &[0, 1]);
        assert_eq!(teg.layer(2), &[1, 2]);
        assert_eq!(teg.layer(3), &[2]);
    }

    #[test]
    fn mdd_keeps_goal_after_budget() {
        // Cheap agent inside a deeper TEG: only the goal remains late.
        let teg = build_mdd_teg(&path3(), 4, 1, 0, 0, 1).unwrap();
        assert_eq!(teg.layer(1), &[1]);
        assert_eq!(teg.layer(4), &[1]);
        assert_eq!(teg.outgoing(3, 1).len(), 1);
    }

    #[test]
    fn outgoing_is_sorted_and_complete() {
        let teg = build_teg(&path3(), 2, 2, 0, 2).unwrap();
        let to: Vec<_> = teg.outgoing(0, 1).iter().map(|e| e.to).collect();
        assert_eq!(to, vec![0, 1, 2]);
    }

    #[test]
    fn dump_format() {
        let teg = build_mdd_teg(&path3(), 2, 2, 0, 0, 2).unwrap();
        assert_eq!(teg.dump(), "0 0 1 std\n1 1 2 std\n");
        let teg = build_teg(&path3(), 1, 0, 1, 1).unwrap();
        assert!(teg.dump().contains("0 1 2 extra\n"));
        assert!(teg.dump().contains("0 1 1 std\n"));
    }
}
