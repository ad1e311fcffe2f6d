//! Compiles per-agent TEGs into CNF and reads solutions back out of models.
//!
//! Variables: `X(a, v, t)` agent `a` is at `v` at time `t`; `E(a, t, u, v)`
//! agent `a` traverses the TEG edge `(u, t) -> (v, t + 1)`; `C(a, t)` agent
//! `a` is charged for time step `t` beyond its shortest-path cost.
//!
//! Clause groups, emitted per agent in ascending agent/time/vertex order:
//!
//! * endpoints: `X(a, start, 0)`, no other vertex at time 0, and `X(a, goal, mu)`;
//! * flow: an occupied vertex has exactly one outgoing edge, an occupied
//!   vertex past layer 0 has an incoming edge, and an edge implies both of
//!   its endpoints;
//! * target-empty: a non-wait edge into `v` forbids every other agent from
//!   being at `v` at the source time;
//! * vertex conflicts: two agents never share a layer vertex;
//! * cost: an extra edge at `t` charges `C(a, t)`, a charge at `t` implies a
//!   charge at every earlier step that has extra edges, and at most `delta`
//!   charges hold overall.

use std::fmt::Write as _;

use thiserror::Error;

use crate::cnf::{CnfFormula, Lit};
use crate::instance::{MapfInstance, Solution, VertexId};
use crate::teg::{EdgeKind, Teg};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EncodeError {
    #[error("expected one TEG per agent ({agents}), got {tegs}")]
    TegCount { agents: usize, tegs: usize },
    #[error("TEG depths differ across agents")]
    DepthMismatch,
    #[error("model does not describe a single path for agent {agent} at time {time}")]
    Decode { agent: usize, time: usize },
}

/// Bidirectional map between the encoding's propositions and variable ids.
#[derive(Debug, Clone)]
pub struct VarMap {
    tegs: Vec<Teg>,
    // Parallel to tegs[a].layer(t).
    x: Vec<Vec<Vec<u32>>>,
    // Parallel to tegs[a].edges_from_layer(t).
    e: Vec<Vec<Vec<u32>>>,
    c: Vec<Vec<Option<u32>>>,
}

impl VarMap {
    pub fn depth(&self) -> usize {
        self.tegs.first().map_or(0, Teg::depth)
    }

    pub fn agent_count(&self) -> usize {
        self.tegs.len()
    }

    pub fn tegs(&self) -> &[Teg] {
        &self.tegs
    }

    pub fn x(&self, agent: usize, v: VertexId, t: usize) -> Option<u32> {
        let layer = self.tegs[agent].layers().get(t)?;
        let i = layer.binary_search(&v).ok()?;
        Some(self.x[agent][t][i])
    }

    pub fn e(&self, agent: usize, t: usize, from: VertexId, to: VertexId) -> Option<u32> {
        if t >= self.depth() {
            return None;
        }
        let edges = self.tegs[agent].edges_from_layer(t);
        let i = edges
            .binary_search_by(|e| (e.from, e.to).cmp(&(from, to)))
            .ok()?;
        Some(self.e[agent][t][i])
    }

    pub fn c(&self, agent: usize, t: usize) -> Option<u32> {
        self.c[agent].get(t).copied().flatten()
    }

    /// All cost variables, agent-major.
    pub fn cost_vars(&self) -> Vec<u32> {
        self.c.iter().flatten().flatten().copied().collect()
    }

    pub fn x_var_count(&self) -> usize {
        self.x.iter().flatten().map(Vec::len).sum()
    }

    /// Debug sidecar: one `x agent vertex time varid` line per position variable.
    pub fn sidecar(&self) -> String {
        let mut out = String::new();
        for (a, teg) in self.tegs.iter().enumerate() {
            for (t, layer) in teg.layers().iter().enumerate() {
                for (i, &v) in layer.iter().enumerate() {
                    let _ = writeln!(out, "x {a} {v} {t} {}", self.x[a][t][i]);
                }
            }
        }
        out
    }
}

/// A formula together with the map needed to decode its models.
#[derive(Debug, Clone)]
pub struct Encoded {
    pub formula: CnfFormula,
    pub varmap: VarMap,
}

impl Encoded {
    /// Forbids `agent` from occupying `v` at time `t`. No-op when `(v, t)` is
    /// not in the agent's TEG.
    pub fn forbid_cell(&mut self, agent: usize, v: VertexId, t: usize) {
        if let Some(x) = self.varmap.x(agent, v, t) {
            self.formula.add_clause([Lit::neg(x)]);
        }
    }

    /// Forbids `agent` from moving into `v` at time `t` from a different vertex.
    pub fn forbid_entry(&mut self, agent: usize, v: VertexId, t: usize) {
        if t == 0 || t > self.varmap.depth() {
            return;
        }
        let teg = &self.varmap.tegs[agent];
        for (i, edge) in teg.edges_from_layer(t - 1).iter().enumerate() {
            if edge.to == v && edge.from != v {
                self.formula.add_clause([Lit::neg(self.varmap.e[agent][t - 1][i])]);
            }
        }
    }
}

/// Sum-of-costs formula for TEGs of depth `mu0 + delta`, allowing at most
/// `delta` cost above the sum of individual shortest paths.
pub fn encode_soc(
    instance: &MapfInstance,
    tegs: Vec<Teg>,
    delta: usize,
) -> Result<Encoded, EncodeError> {
    encode(instance, tegs, Some(delta))
}

/// Makespan formula: the same movement rules without any cost accounting.
pub fn encode_makespan(instance: &MapfInstance, tegs: Vec<Teg>) -> Result<Encoded, EncodeError> {
    encode(instance, tegs, None)
}

fn encode(
    instance: &MapfInstance,
    tegs: Vec<Teg>,
    delta: Option<usize>,
) -> Result<Encoded, EncodeError> {
    let k = instance.agent_count();
    if tegs.len() != k {
        return Err(EncodeError::TegCount {
            agents: k,
            tegs: tegs.len(),
        });
    }
    let mu = tegs.first().map_or(0, Teg::depth);
    if tegs.iter().any(|t| t.depth() != mu) {
        return Err(EncodeError::DepthMismatch);
    }

    let mut f = CnfFormula::new();
    let mut x = Vec::with_capacity(k);
    let mut e = Vec::with_capacity(k);
    let mut c = Vec::with_capacity(k);
    for teg in &tegs {
        x.push(
            teg.layers()
                .iter()
                .map(|layer| layer.iter().map(|_| f.new_var()).collect())
                .collect::<Vec<Vec<u32>>>(),
        );
        e.push(
            (0..mu)
                .map(|t| teg.edges_from_layer(t).iter().map(|_| f.new_var()).collect())
                .collect::<Vec<Vec<u32>>>(),
        );
        c.push(
            (0..mu)
                .map(|t| (delta.is_some() && teg.has_extra_from(t)).then(|| f.new_var()))
                .collect::<Vec<Option<u32>>>(),
        );
    }
    let varmap = VarMap { tegs, x, e, c };
    let tegs = &varmap.tegs;

    for (a, (teg, agent)) in tegs.iter().zip(instance.agents()).enumerate() {
        let xa = &varmap.x[a];
        let ea = &varmap.e[a];

        match (varmap.x(a, agent.start, 0), varmap.x(a, agent.goal, mu)) {
            (Some(s), Some(g)) => {
                f.add_clause([Lit::pos(s)]);
                f.add_clause([Lit::pos(g)]);
            }
            _ => f.add_clause([]),
        }
        for (i, &v) in teg.layer(0).iter().enumerate() {
            if v != agent.start {
                f.add_clause([Lit::neg(xa[0][i])]);
            }
        }

        for t in 0..mu {
            let edges = teg.edges_from_layer(t);
            // Exactly one outgoing edge from an occupied vertex.
            let mut lo = 0;
            for (i, &u) in teg.layer(t).iter().enumerate() {
                let hi = lo + edges[lo..].partition_point(|edge| edge.from == u);
                let out = &ea[t][lo..hi];
                f.add_clause(
                    std::iter::once(Lit::neg(xa[t][i])).chain(out.iter().map(|&v| Lit::pos(v))),
                );
                for p in 0..out.len() {
                    for q in p + 1..out.len() {
                        f.add_clause([Lit::neg(out[p]), Lit::neg(out[q])]);
                    }
                }
                lo = hi;
            }
            // Occupied vertices are entered from the previous layer.
            for (i, &v) in teg.layer(t + 1).iter().enumerate() {
                let incoming = edges
                    .iter()
                    .zip(&ea[t])
                    .filter(|(edge, _)| edge.to == v)
                    .map(|(_, &var)| Lit::pos(var));
                f.add_clause(std::iter::once(Lit::neg(xa[t + 1][i])).chain(incoming));
            }
            // Edges imply their endpoints.
            for (edge, &ev) in edges.iter().zip(&ea[t]) {
                let from = varmap.x(a, edge.from, t).expect("edge source admitted");
                let to = varmap.x(a, edge.to, t + 1).expect("edge target admitted");
                f.add_clause([Lit::neg(ev), Lit::pos(from)]);
                f.add_clause([Lit::neg(ev), Lit::pos(to)]);
            }
            // Target of a move must be empty at the source time.
            for (edge, &ev) in edges.iter().zip(&ea[t]) {
                if edge.is_wait() {
                    continue;
                }
                for h in (0..k).filter(|&h| h != a) {
                    if let Some(xh) = varmap.x(h, edge.to, t) {
                        f.add_clause([Lit::neg(ev), Lit::neg(xh)]);
                    }
                }
            }
        }

        // Vertex conflicts against every later agent.
        for h in a + 1..k {
            for (t, xat) in xa.iter().enumerate() {
                for (i, &v) in teg.layer(t).iter().enumerate() {
                    if let Some(xh) = varmap.x(h, v, t) {
                        f.add_clause([Lit::neg(xat[i]), Lit::neg(xh)]);
                    }
                }
            }
        }

        if delta.is_some() {
            let ca = &varmap.c[a];
            for t in 0..mu {
                for (edge, &ev) in teg.edges_from_layer(t).iter().zip(&ea[t]) {
                    if edge.kind == EdgeKind::Extra {
                        let cost = ca[t].expect("cost variable exists where extra edges leave");
                        f.add_clause([Lit::neg(ev), Lit::pos(cost)]);
                    }
                }
            }
            for t in 0..mu {
                let Some(ct) = ca[t] else { continue };
                for cs in ca[..t].iter().flatten() {
                    f.add_clause([Lit::neg(ct), Lit::pos(*cs)]);
                }
            }
        }
    }

    if let Some(delta) = delta {
        let costs: Vec<Lit> = varmap.cost_vars().into_iter().map(Lit::pos).collect();
        if !costs.is_empty() {
            f.add_at_most(&costs, delta);
        }
    }

    Ok(Encoded { formula: f, varmap })
}

/// Reads each agent's path out of a model by following its true edge
/// variables from the start.
pub fn decode_model(varmap: &VarMap, model: &[bool]) -> Result<Solution, EncodeError> {
    let holds = |var: u32| model.get(var as usize).copied().unwrap_or(false);
    let mu = varmap.depth();
    let mut paths = Vec::with_capacity(varmap.agent_count());
    for (a, teg) in varmap.tegs.iter().enumerate() {
        let mut path = Vec::with_capacity(mu + 1);
        for t in 0..=mu {
            let mut occupied = teg
                .layer(t)
                .iter()
                .zip(&varmap.x[a][t])
                .filter(|(_, &var)| holds(var))
                .map(|(&v, _)| v);
            let (Some(v), None) = (occupied.next(), occupied.next()) else {
                return Err(EncodeError::Decode { agent: a, time: t });
            };
            if let Some(&prev) = path.last() {
                if varmap.e(a, t - 1, prev, v).is_none_or(|var| !holds(var)) {
                    return Err(EncodeError::Decode { agent: a, time: t });
                }
            }
            path.push(v);
        }
        paths.push(path);
    }
    Ok(Solution::from_paths(paths))
}
