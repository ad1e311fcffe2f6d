//! Graphs, MAPF instances, solutions and the text formats they travel in.
//!
//! Movement follows the strict target-empty rule: an agent may wait, or move
//! along an edge into a vertex that no other agent occupies at the time the
//! move starts. Two agents never share a vertex at the same time step.

use std::collections::VecDeque;
use std::fmt::{self, Write as _};
use std::sync::Arc;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type VertexId = usize;

/// Marker returned by BFS for vertices that cannot be reached.
pub const UNREACHABLE: u32 = u32::MAX;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InstanceError {
    #[error("map line {line}: {msg}")]
    MapFormat { line: usize, msg: String },
    #[error("instance line {line}: {msg}")]
    InstanceFormat { line: usize, msg: String },
    #[error("vertex {0} is out of range")]
    InvalidVertex(VertexId),
    #[error("self-loop on vertex {0}; waits are not graph edges")]
    SelfLoop(VertexId),
    #[error("agents {0} and {1} share a start vertex")]
    DuplicateStart(usize, usize),
    #[error("agents {0} and {1} share a goal vertex")]
    DuplicateGoal(usize, usize),
    #[error("{agents} agents requested but only {free} free cells")]
    NotEnoughFreeCells { agents: usize, free: usize },
    #[error("obstacle rate {0} outside [0, 1]")]
    ObstacleRate(f64),
    #[error("goal of agent {0} is unreachable from its start")]
    Unreachable(usize),
}

/// Row-major cell layout of a graph built from a grid map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridLayout {
    pub width: usize,
    pub height: usize,
    cells: Vec<Option<VertexId>>,
    coords: Vec<(usize, usize)>,
}

impl GridLayout {
    pub fn vertex_at(&self, row: usize, col: usize) -> Option<VertexId> {
        if row >= self.height || col >= self.width {
            return None;
        }
        self.cells[row * self.width + col]
    }

    /// `(row, col)` of a vertex.
    pub fn coords(&self, v: VertexId) -> (usize, usize) {
        self.coords[v]
    }

    pub fn is_passable(&self, row: usize, col: usize) -> bool {
        self.vertex_at(row, col).is_some()
    }
}

/// Undirected graph with dense vertex ids and sorted adjacency lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    adjacency: Vec<Vec<VertexId>>,
    edge_count: usize,
    grid: Option<GridLayout>,
}

impl Graph {
    pub fn new(
        vertex_count: usize,
        edges: impl IntoIterator<Item = (VertexId, VertexId)>,
    ) -> Result<Self, InstanceError> {
        let mut adjacency = vec![Vec::new(); vertex_count];
        for (u, v) in edges {
            if u >= vertex_count {
                return Err(InstanceError::InvalidVertex(u));
            }
            if v >= vertex_count {
                return Err(InstanceError::InvalidVertex(v));
            }
            if u == v {
                return Err(InstanceError::SelfLoop(u));
            }
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        let mut edge_count = 0;
        for list in &mut adjacency {
            list.sort_unstable();
            list.dedup();
            edge_count += list.len();
        }
        Ok(Graph {
            adjacency,
            edge_count: edge_count / 2,
            grid: None,
        })
    }

    /// 4-connected graph over the passable cells of a `height × width` grid.
    pub fn from_grid(width: usize, height: usize, passable: &[bool]) -> Self {
        assert_eq!(passable.len(), width * height);
        let mut cells = vec![None; width * height];
        let mut coords = Vec::new();
        for row in 0..height {
            for col in 0..width {
                if passable[row * width + col] {
                    cells[row * width + col] = Some(coords.len());
                    coords.push((row, col));
                }
            }
        }
        let mut edges = Vec::new();
        for (v, &(row, col)) in coords.iter().enumerate() {
            if col + 1 < width {
                if let Some(w) = cells[row * width + col + 1] {
                    edges.push((v, w));
                }
            }
            if row + 1 < height {
                if let Some(w) = cells[(row + 1) * width + col] {
                    edges.push((v, w));
                }
            }
        }
        let mut graph = Graph::new(coords.len(), edges).expect("grid edges are well-formed");
        graph.grid = Some(GridLayout {
            width,
            height,
            cells,
            coords,
        });
        graph
    }

    pub fn vertex_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn neighbors(&self, v: VertexId) -> &[VertexId] {
        &self.adjacency[v]
    }

    pub fn has_edge(&self, u: VertexId, v: VertexId) -> bool {
        self.adjacency
            .get(u)
            .is_some_and(|list| list.binary_search(&v).is_ok())
    }

    /// Each undirected edge once, as `(u, v)` with `u < v`, in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (VertexId, VertexId)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(u, list)| list.iter().filter(move |&&v| u < v).map(move |&v| (u, v)))
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn grid(&self) -> Option<&GridLayout> {
        self.grid.as_ref()
    }

    /// Hop distances from `source`; [`UNREACHABLE`] where no path exists.
    pub fn bfs_distances(&self, source: VertexId) -> Vec<u32> {
        let mut dist = vec![UNREACHABLE; self.vertex_count()];
        let mut queue = VecDeque::new();
        dist[source] = 0;
        queue.push_back(source);
        while let Some(u) = queue.pop_front() {
            for &v in &self.adjacency[u] {
                if dist[v] == UNREACHABLE {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        dist
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Agent {
    pub start: VertexId,
    pub goal: VertexId,
}

/// A graph plus an ordered list of agents with pairwise distinct starts and
/// pairwise distinct goals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MapfInstance {
    graph: Arc<Graph>,
    agents: Vec<Agent>,
}

impl MapfInstance {
    pub fn new(graph: impl Into<Arc<Graph>>, agents: Vec<Agent>) -> Result<Self, InstanceError> {
        let graph = graph.into();
        let n = graph.vertex_count();
        let mut start_owner = vec![None; n];
        let mut goal_owner = vec![None; n];
        for (i, agent) in agents.iter().enumerate() {
            for v in [agent.start, agent.goal] {
                if v >= n {
                    return Err(InstanceError::InvalidVertex(v));
                }
            }
            if let Some(j) = start_owner[agent.start].replace(i) {
                return Err(InstanceError::DuplicateStart(j, i));
            }
            if let Some(j) = goal_owner[agent.goal].replace(i) {
                return Err(InstanceError::DuplicateGoal(j, i));
            }
        }
        Ok(MapfInstance { graph, agents })
    }

    /// Builds an instance without the distinct-start/goal checks. Only useful
    /// for exercising how solvers treat malformed input.
    pub fn new_unchecked(graph: impl Into<Arc<Graph>>, agents: Vec<Agent>) -> Self {
        MapfInstance {
            graph: graph.into(),
            agents,
        }
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn shared_graph(&self) -> Arc<Graph> {
        Arc::clone(&self.graph)
    }

    pub fn agents(&self) -> &[Agent] {
        &self.agents
    }

    pub fn agent_count(&self) -> usize {
        self.agents.len()
    }

    /// The instance restricted to the listed agents, in the given order.
    pub fn sub_instance(&self, agent_ids: &[usize]) -> MapfInstance {
        MapfInstance {
            graph: Arc::clone(&self.graph),
            agents: agent_ids.iter().map(|&i| self.agents[i]).collect(),
        }
    }
}

/// Steps an agent spends before its final arrival at its goal. Waits at the
/// goal after that arrival are free.
pub fn individual_cost(path: &[VertexId], goal: VertexId) -> usize {
    match path.iter().rposition(|&v| v != goal) {
        Some(last_away) => last_away + 1,
        None => 0,
    }
}

#[derive(Debug, Deserialize)]
struct SolutionRepr {
    paths: Vec<Vec<VertexId>>,
}

impl From<SolutionRepr> for Solution {
    fn from(repr: SolutionRepr) -> Self {
        Solution::from_paths(repr.paths)
    }
}

/// Per-agent timed vertex sequences of a common length.
///
/// Paths are normalised on construction: shorter paths are padded by waiting
/// at their last vertex, and trailing steps in which every agent idles are
/// dropped, so `makespan` is both the common path length and the time the
/// last agent arrives. Cost fields are always recomputed from the paths.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "SolutionRepr")]
pub struct Solution {
    pub paths: Vec<Vec<VertexId>>,
    pub soc: usize,
    pub makespan: usize,
}

impl Solution {
    pub fn from_paths(mut paths: Vec<Vec<VertexId>>) -> Self {
        let len = paths.iter().map(Vec::len).max().unwrap_or(1);
        let mut arrival = 0;
        let mut soc = 0;
        for path in &mut paths {
            let Some(&last) = path.last() else { continue };
            path.resize(len, last);
            let cost = individual_cost(path, last);
            soc += cost;
            arrival = arrival.max(cost);
        }
        for path in &mut paths {
            path.truncate(arrival + 1);
        }
        Solution {
            paths,
            soc,
            makespan: arrival,
        }
    }

    /// Position of `agent` at time `t`; agents wait at their final vertex.
    pub fn position(&self, agent: usize, t: usize) -> VertexId {
        let path = &self.paths[agent];
        path[t.min(path.len() - 1)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    VertexConflict,
    TargetNotEmpty,
    InvalidMove,
    EndpointMismatch,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub agents: Vec<usize>,
    pub time: usize,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            ViolationKind::VertexConflict => "vertex-conflict",
            ViolationKind::TargetNotEmpty => "target-not-empty",
            ViolationKind::InvalidMove => "invalid-move",
            ViolationKind::EndpointMismatch => "endpoint-mismatch",
        };
        let agents: Vec<String> = self.agents.iter().map(usize::to_string).collect();
        write!(f, "{kind} at t={} (agents {})", self.time, agents.join(", "))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    fn from_violations(violations: Vec<Violation>) -> Self {
        ValidationReport {
            ok: violations.is_empty(),
            violations,
        }
    }
}

/// Checks a solution against the movement rules; never fails, every problem
/// ends up in the report. Paths of unequal length are compared as if the
/// shorter ones kept waiting at their last vertex.
pub fn validate_solution(instance: &MapfInstance, solution: &Solution) -> ValidationReport {
    let graph = instance.graph();
    let agents = instance.agents();
    let mut violations = Vec::new();

    if solution.paths.len() != agents.len() {
        for i in solution.paths.len().min(agents.len())..agents.len().max(solution.paths.len()) {
            violations.push(Violation {
                kind: ViolationKind::EndpointMismatch,
                agents: vec![i],
                time: 0,
            });
        }
        return ValidationReport::from_violations(violations);
    }
    if agents.is_empty() {
        return ValidationReport::from_violations(violations);
    }

    let horizon = solution.paths.iter().map(Vec::len).max().unwrap_or(0);
    for (i, path) in solution.paths.iter().enumerate() {
        if path.is_empty() {
            violations.push(Violation {
                kind: ViolationKind::EndpointMismatch,
                agents: vec![i],
                time: 0,
            });
            continue;
        }
        if let Some(t) = path.iter().position(|&v| v >= graph.vertex_count()) {
            violations.push(Violation {
                kind: ViolationKind::InvalidMove,
                agents: vec![i],
                time: t,
            });
            continue;
        }
        if path[0] != agents[i].start {
            violations.push(Violation {
                kind: ViolationKind::EndpointMismatch,
                agents: vec![i],
                time: 0,
            });
        }
        if *path.last().unwrap() != agents[i].goal {
            violations.push(Violation {
                kind: ViolationKind::EndpointMismatch,
                agents: vec![i],
                time: horizon - 1,
            });
        }
        for (t, step) in path.windows(2).enumerate() {
            if step[0] != step[1] && !graph.has_edge(step[0], step[1]) {
                violations.push(Violation {
                    kind: ViolationKind::InvalidMove,
                    agents: vec![i],
                    time: t,
                });
            }
        }
    }
    if !violations.is_empty() {
        return ValidationReport::from_violations(violations);
    }

    let at = |i: usize, t: usize| {
        let p = &solution.paths[i];
        p[t.min(p.len() - 1)]
    };
    let k = agents.len();
    for t in 0..horizon {
        for i in 0..k {
            for j in i + 1..k {
                if at(i, t) == at(j, t) {
                    violations.push(Violation {
                        kind: ViolationKind::VertexConflict,
                        agents: vec![i, j],
                        time: t,
                    });
                }
            }
        }
        if t + 1 == horizon {
            break;
        }
        for i in 0..k {
            let (from, to) = (at(i, t), at(i, t + 1));
            if from == to {
                continue;
            }
            for h in (0..k).filter(|&h| h != i) {
                if at(h, t) == to {
                    violations.push(Violation {
                        kind: ViolationKind::TargetNotEmpty,
                        agents: vec![i, h],
                        time: t,
                    });
                }
            }
        }
    }
    ValidationReport::from_violations(violations)
}

/// Individual shortest-path lower bounds of an instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathCosts {
    pub xi0: Vec<u32>,
    pub xi0_sum: u32,
    pub mu0: u32,
}

pub fn shortest_path_costs(instance: &MapfInstance) -> Result<PathCosts, InstanceError> {
    let mut xi0 = Vec::with_capacity(instance.agent_count());
    for (i, agent) in instance.agents().iter().enumerate() {
        let d = instance.graph().bfs_distances(agent.start)[agent.goal];
        if d == UNREACHABLE {
            return Err(InstanceError::Unreachable(i));
        }
        xi0.push(d);
    }
    Ok(PathCosts {
        xi0_sum: xi0.iter().sum(),
        mu0: xi0.iter().copied().max().unwrap_or(0),
        xi0,
    })
}

/// Parses a MovingAI-style grid map into a 4-connected graph.
pub fn parse_map(text: &str) -> Result<Graph, InstanceError> {
    let err = |line: usize, msg: &str| InstanceError::MapFormat {
        line,
        msg: msg.to_string(),
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
    let mut height = None;
    let mut width = None;
    let mut seen_type = false;
    loop {
        let Some((no, line)) = lines.next() else {
            return Err(err(0, "missing `map` line"));
        };
        let mut parts = line.split_whitespace();
        match (parts.next(), parts.next(), parts.next()) {
            (None, ..) => continue,
            (Some("type"), Some(_), None) => seen_type = true,
            (Some("height"), Some(h), None) => {
                height = Some(h.parse::<usize>().map_err(|_| err(no, "bad height"))?)
            }
            (Some("width"), Some(w), None) => {
                width = Some(w.parse::<usize>().map_err(|_| err(no, "bad width"))?)
            }
            (Some("map"), None, None) => {
                if !seen_type {
                    return Err(err(no, "missing `type` line"));
                }
                break;
            }
            _ => return Err(err(no, "malformed header line")),
        }
    }
    let (Some(height), Some(width)) = (height, width) else {
        return Err(err(0, "header lacks height or width"));
    };
    let mut passable = Vec::with_capacity(width * height);
    let mut rows = 0;
    for (no, line) in lines {
        if rows == height {
            if line.trim().is_empty() {
                continue;
            }
            return Err(err(no, "more rows than the declared height"));
        }
        if line.chars().count() != width {
            return Err(err(no, "row length differs from the declared width"));
        }
        for c in line.chars() {
            passable.push(match c {
                '.' | 'G' => true,
                '@' | 'O' | 'T' => false,
                _ => return Err(err(no, &format!("unknown cell character {c:?}"))),
            });
        }
        rows += 1;
    }
    if rows != height {
        return Err(err(0, "fewer rows than the declared height"));
    }
    Ok(Graph::from_grid(width, height, &passable))
}

pub fn write_map(grid: &GridLayout) -> String {
    let mut out = format!(
        "type octile\nheight {}\nwidth {}\nmap\n",
        grid.height, grid.width
    );
    for row in 0..grid.height {
        for col in 0..grid.width {
            out.push(if grid.is_passable(row, col) { '.' } else { '@' });
        }
        out.push('\n');
    }
    out
}

/// Parses the native instance format.
///
/// Grid instances (`agents K` followed by `start_row start_col goal_row
/// goal_col` lines) need the map graph; graph instances (`vertices N`,
/// `edge a b`, `agent s g`) are self-contained. Blank lines and `#` comments
/// are skipped.
pub fn parse_instance(text: &str, map: Option<Arc<Graph>>) -> Result<MapfInstance, InstanceError> {
    let err = |line: usize, msg: &str| InstanceError::InstanceFormat {
        line,
        msg: msg.to_string(),
    };
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let Some((first_no, first)) = lines.next() else {
        return Err(err(0, "empty instance"));
    };
    let head: Vec<&str> = first.split_whitespace().collect();
    let num = |no: usize, s: &str| s.parse::<usize>().map_err(|_| err(no, "expected a number"));
    match head.as_slice() {
        ["agents", k] => {
            let k = num(first_no, k)?;
            let graph = map.ok_or_else(|| err(first_no, "grid instance needs a map"))?;
            let grid = graph
                .grid()
                .ok_or_else(|| err(first_no, "map graph has no grid layout"))?
                .clone();
            let mut agents = Vec::with_capacity(k);
            for (no, line) in lines.by_ref().take(k) {
                let f: Vec<&str> = line.split_whitespace().collect();
                if f.len() != 4 {
                    return Err(err(no, "expected `start_row start_col goal_row goal_col`"));
                }
                let cell = |r: &str, c: &str| -> Result<VertexId, InstanceError> {
                    grid.vertex_at(num(no, r)?, num(no, c)?)
                        .ok_or_else(|| err(no, "cell is blocked or outside the map"))
                };
                agents.push(Agent {
                    start: cell(f[0], f[1])?,
                    goal: cell(f[2], f[3])?,
                });
            }
            if agents.len() != k {
                return Err(err(0, "fewer agent lines than declared"));
            }
            if let Some((no, _)) = lines.next() {
                return Err(err(no, "trailing content after agent lines"));
            }
            MapfInstance::new(graph, agents)
        }
        ["vertices", n] => {
            let n = num(first_no, n)?;
            let mut edges = Vec::new();
            let mut agents = Vec::new();
            for (no, line) in lines {
                let f: Vec<&str> = line.split_whitespace().collect();
                match f.as_slice() {
                    ["edge", a, b] => edges.push((num(no, a)?, num(no, b)?)),
                    ["agent", s, g] => agents.push(Agent {
                        start: num(no, s)?,
                        goal: num(no, g)?,
                    }),
                    _ => return Err(err(no, "expected `edge a b` or `agent s g`")),
                }
            }
            MapfInstance::new(Graph::new(n, edges)?, agents)
        }
        _ => Err(err(first_no, "expected `agents K` or `vertices N`")),
    }
}

/// Serialises an instance; grid instances use row/column lines, anything
/// else the explicit graph form.
pub fn write_instance(instance: &MapfInstance) -> String {
    let mut out = String::new();
    match instance.graph().grid() {
        Some(grid) => {
            let _ = writeln!(out, "agents {}", instance.agent_count());
            for a in instance.agents() {
                let (sr, sc) = grid.coords(a.start);
                let (gr, gc) = grid.coords(a.goal);
                let _ = writeln!(out, "{sr} {sc} {gr} {gc}");
            }
        }
        None => {
            let _ = writeln!(out, "vertices {}", instance.graph().vertex_count());
            for (u, v) in instance.graph().edges() {
                let _ = writeln!(out, "edge {u} {v}");
            }
            for a in instance.agents() {
                let _ = writeln!(out, "agent {} {}", a.start, a.goal);
            }
        }
    }
    out
}

/// Parameters of the random grid generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridGenConfig {
    pub width: usize,
    pub height: usize,
    pub obstacle_rate: f64,
    pub agents: usize,
    pub seed: u64,
    pub walk_steps: usize,
}

/// Random grid instance, solvable by construction.
///
/// Obstacles are `round(rate · w · h)` cells sampled uniformly, starts are
/// distinct free cells, and goals are where the agents end up after
/// `walk_steps` random single-agent moves (a random agent tries a random
/// neighbour-or-wait; moves into occupied cells are rejected).
pub fn generate_grid_instance(cfg: &GridGenConfig) -> Result<MapfInstance, InstanceError> {
    if !(0.0..=1.0).contains(&cfg.obstacle_rate) {
        return Err(InstanceError::ObstacleRate(cfg.obstacle_rate));
    }
    let cells = cfg.width * cfg.height;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let obstacles = ((cfg.obstacle_rate * cells as f64).round() as usize).min(cells);
    let mut passable = vec![true; cells];
    for c in sample(&mut rng, cells, obstacles) {
        passable[c] = false;
    }
    let graph = Graph::from_grid(cfg.width, cfg.height, &passable);
    let free = graph.vertex_count();
    if cfg.agents > free {
        return Err(InstanceError::NotEnoughFreeCells {
            agents: cfg.agents,
            free,
        });
    }
    let starts: Vec<VertexId> = sample(&mut rng, free, cfg.agents).into_vec();
    let mut positions = starts.clone();
    let mut occupied = vec![false; free];
    for &s in &starts {
        occupied[s] = true;
    }
    if cfg.agents > 0 {
        for _ in 0..cfg.walk_steps {
            let a = rng.gen_range(0..cfg.agents);
            let here = positions[a];
            let nbrs = graph.neighbors(here);
            let choice = rng.gen_range(0..=nbrs.len());
            if choice == 0 {
                continue;
            }
            let there = nbrs[choice - 1];
            if occupied[there] {
                continue;
            }
            occupied[here] = false;
            occupied[there] = true;
            positions[a] = there;
        }
    }
    let agents = starts
        .into_iter()
        .zip(positions)
        .map(|(start, goal)| Agent { start, goal })
        .collect();
    MapfInstance::new(graph, agents)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn path3() -> Graph {
        Graph::new(3, [(0, 1), (1, 2)]).unwrap()
    }

    fn square() -> Graph {
        // 0 1
        // 2 3
        parse_map("type octile\nheight 2\nwidth 2\nmap\n..\n..\n").unwrap()
    }

    #[test]
    fn parse_full_2x2() {
        let g = square();
        assert_eq!(g.vertex_count(), 4);
        assert_eq!(g.edge_count(), 4);
    }

    #[test]
    fn parse_line_map() {
        let g = parse_map("type octile\nheight 1\nwidth 3\nmap\n...\n").unwrap();
        assert_eq!((g.vertex_count(), g.edge_count()), (3, 2));
    }

    #[test]
    fn parse_map_with_obstacle() {
        let g = parse_map("type octile\nheight 2\nwidth 2\nmap\n.@\n..\n").unwrap();
        assert_eq!((g.vertex_count(), g.edge_count()), (3, 2));
        let grid = g.grid().unwrap();
        assert_eq!(grid.vertex_at(0, 1), None);
        assert_eq!(grid.coords(2), (1, 1));
    }

    #[test]
    fn parse_map_errors() {
        assert!(matches!(
            parse_map("height 2\nwidth 2\nmap\n..\n..\n"),
            Err(InstanceError::MapFormat { .. })
        ));
        assert!(matches!(
            parse_map("type octile\nheight 2\nwidth 2\nmap\n..\n...\n"),
            Err(InstanceError::MapFormat { line: 6, .. })
        ));
        assert!(matches!(
            parse_map("type octile\nheight 1\nwidth 2\nmap\n.x\n"),
            Err(InstanceError::MapFormat { line: 5, .. })
        ));
        assert!(parse_map("type octile\nheight 2\nwidth 2\nmap\n..\n").is_err());
        assert!(parse_map("type octile\nheight two\nwidth 2\nmap\n..\n").is_err());
    }

    #[test]
    fn map_round_trip() {
        let text = "type octile\nheight 2\nwidth 3\nmap\n.@.\n...\n";
        let g = parse_map(text).unwrap();
        assert_eq!(write_map(g.grid().unwrap()), text);
    }

    #[test]
    fn graph_rejects_self_loops_and_bad_ids() {
        assert_eq!(Graph::new(2, [(1, 1)]), Err(InstanceError::SelfLoop(1)));
        assert_eq!(Graph::new(2, [(0, 2)]), Err(InstanceError::InvalidVertex(2)));
        let g = Graph::new(2, [(0, 1), (1, 0)]).unwrap();
        assert_eq!(g.edge_count(), 1);
    }

    #[test]
    fn instance_rejects_shared_endpoints() {
        let g = Arc::new(path3());
        let a = |s, g| Agent { start: s, goal: g };
        assert_eq!(
            MapfInstance::new(g.clone(), vec![a(0, 1), a(0, 2)]),
            Err(InstanceError::DuplicateStart(0, 1))
        );
        assert_eq!(
            MapfInstance::new(g, vec![a(0, 2), a(1, 2)]),
            Err(InstanceError::DuplicateGoal(0, 1))
        );
    }

    #[test]
    fn costs_on_path_graph() {
        let inst = MapfInstance::new(path3(), vec![Agent { start: 0, goal: 2 }]).unwrap();
        let c = shortest_path_costs(&inst).unwrap();
        assert_eq!(c.xi0, vec![2]);
        let inst = MapfInstance::new(path3(), vec![Agent { start: 1, goal: 1 }]).unwrap();
        assert_eq!(shortest_path_costs(&inst).unwrap().xi0, vec![0]);
    }

    #[test]
    fn costs_on_square_opposite_corners() {
        let inst = MapfInstance::new(
            square(),
            vec![Agent { start: 0, goal: 3 }, Agent { start: 3, goal: 0 }],
        )
        .unwrap();
        let c = shortest_path_costs(&inst).unwrap();
        assert_eq!((c.xi0_sum, c.mu0), (4, 2));
    }

    #[test]
    fn unreachable_goal_is_reported() {
        let g = Graph::new(3, [(0, 1)]).unwrap();
        let inst = MapfInstance::new(g, vec![Agent { start: 0, goal: 2 }]).unwrap();
        assert_eq!(shortest_path_costs(&inst), Err(InstanceError::Unreachable(0)));
    }

    #[test]
    fn individual_cost_ignores_trailing_goal_waits() {
        assert_eq!(individual_cost(&[0, 1, 2, 2, 2], 2), 2);
        assert_eq!(individual_cost(&[0, 0, 1, 2], 2), 3);
        assert_eq!(individual_cost(&[2, 1, 2, 2], 2), 2);
        assert_eq!(individual_cost(&[2, 2], 2), 0);
    }

    #[test]
    fn solution_normalises_paths() {
        let s = Solution::from_paths(vec![vec![0, 1, 2, 2, 2], vec![3, 3]]);
        assert_eq!(s.paths, vec![vec![0, 1, 2], vec![3, 3, 3]]);
        assert_eq!((s.soc, s.makespan), (2, 2));
    }

    #[test]
    fn waiting_agent_is_valid() {
        let inst = MapfInstance::new(path3(), vec![Agent { start: 1, goal: 1 }]).unwrap();
        let s = Solution::from_paths(vec![vec![1, 1, 1]]);
        assert!(validate_solution(&inst, &s).ok);
        assert_eq!(s.soc, 0);
    }

    #[test]
    fn swap_violates_target_empty() {
        let g = Graph::new(2, [(0, 1)]).unwrap();
        let inst = MapfInstance::new(
            g,
            vec![Agent { start: 0, goal: 1 }, Agent { start: 1, goal: 0 }],
        )
        .unwrap();
        let s = Solution::from_paths(vec![vec![0, 1], vec![1, 0]]);
        let report = validate_solution(&inst, &s);
        assert!(!report.ok);
        let movers: HashSet<usize> = report
            .violations
            .iter()
            .filter(|v| v.kind == ViolationKind::TargetNotEmpty)
            .map(|v| v.agents[0])
            .collect();
        assert_eq!(movers, HashSet::from([0, 1]));
    }

    #[test]
    fn rotation_on_square_is_valid() {
        // a1: 0 -> 1 -> 3, a2: 3 -> 2 -> 0. At every step each target is empty.
        let inst = MapfInstance::new(
            square(),
            vec![Agent { start: 0, goal: 3 }, Agent { start: 3, goal: 0 }],
        )
        .unwrap();
        let s = Solution::from_paths(vec![vec![0, 1, 3], vec![3, 2, 0]]);
        let report = validate_solution(&inst, &s);
        assert!(report.ok, "{report:?}");
        assert_eq!((s.soc, s.makespan), (4, 2));
    }

    #[test]
    fn following_into_vacated_cell_is_rejected() {
        let g = Graph::new(3, [(0, 1), (1, 2)]).unwrap();
        let inst = MapfInstance::new(
            g,
            vec![Agent { start: 0, goal: 1 }, Agent { start: 1, goal: 2 }],
        )
        .unwrap();
        let s = Solution::from_paths(vec![vec![0, 1], vec![1, 2]]);
        let report = validate_solution(&inst, &s);
        assert_eq!(
            report.violations,
            vec![Violation {
                kind: ViolationKind::TargetNotEmpty,
                agents: vec![0, 1],
                time: 0
            }]
        );
        let s = Solution::from_paths(vec![vec![0, 0, 1], vec![1, 2, 2]]);
        assert!(validate_solution(&inst, &s).ok);
    }

    #[test]
    fn invalid_moves_and_endpoints() {
        let inst = MapfInstance::new(path3(), vec![Agent { start: 0, goal: 2 }]).unwrap();
        let report = validate_solution(&inst, &Solution::from_paths(vec![vec![0, 2]]));
        assert_eq!(report.violations[0].kind, ViolationKind::InvalidMove);
        let report = validate_solution(&inst, &Solution::from_paths(vec![vec![0, 1]]));
        assert_eq!(report.violations[0].kind, ViolationKind::EndpointMismatch);
        let report = validate_solution(&inst, &Solution::from_paths(vec![vec![0, 7]]));
        assert_eq!(report.violations[0].kind, ViolationKind::InvalidMove);
        let report = validate_solution(&inst, &Solution::from_paths(vec![]));
        assert_eq!(report.violations[0].kind, ViolationKind::EndpointMismatch);
    }

    #[test]
    fn generator_respects_obstacle_count() {
        let cfg = GridGenConfig {
            width: 8,
            height: 8,
            obstacle_rate: 0.10,
            agents: 4,
            seed: 1,
            walk_steps: 200,
        };
        let inst = generate_grid_instance(&cfg).unwrap();
        assert_eq!(inst.graph().vertex_count(), 64 - 6);
        assert_eq!(inst.agent_count(), 4);
        assert_eq!(inst, generate_grid_instance(&cfg).unwrap());
    }

    #[test]
    fn zero_walk_keeps_goal_at_start() {
        let cfg = GridGenConfig {
            width: 3,
            height: 1,
            obstacle_rate: 0.0,
            agents: 1,
            seed: 99,
            walk_steps: 0,
        };
        let inst = generate_grid_instance(&cfg).unwrap();
        assert_eq!(inst.agents()[0].start, inst.agents()[0].goal);
    }

    #[test]
    fn generator_rejects_overfull_grid() {
        let cfg = GridGenConfig {
            width: 2,
            height: 2,
            obstacle_rate: 0.5,
            agents: 3,
            seed: 0,
            walk_steps: 0,
        };
        assert_eq!(
            generate_grid_instance(&cfg),
            Err(InstanceError::NotEnoughFreeCells { agents: 3, free: 2 })
        );
    }

    #[test]
    fn instance_text_round_trip() {
        let cfg = GridGenConfig {
            width: 5,
            height: 4,
            obstacle_rate: 0.2,
            agents: 3,
            seed: 5,
            walk_steps: 40,
        };
        let inst = generate_grid_instance(&cfg).unwrap();
        let text = write_instance(&inst);
        let back = parse_instance(&text, Some(inst.shared_graph())).unwrap();
        assert_eq!(back, inst);

        let plain = MapfInstance::new(path3(), vec![Agent { start: 0, goal: 2 }]).unwrap();
        let text = write_instance(&plain);
        assert_eq!(text, "vertices 3\nedge 0 1\nedge 1 2\nagent 0 2\n");
        assert_eq!(parse_instance(&text, None).unwrap(), plain);
    }

    #[test]
    fn instance_parse_errors() {
        assert!(parse_instance("agents 1\n0 0 0 1\n", None).is_err());
        assert!(parse_instance("vertices 2\nedge 0 1\nagent 0\n", None).is_err());
        assert!(parse_instance("nodes 2\n", None).is_err());
        let g = Arc::new(square());
        assert!(parse_instance("agents 2\n0 0 1 1\n", Some(g.clone())).is_err());
        assert!(parse_instance("agents 1\n0 0 5 5\n", Some(g)).is_err());
    }

    #[test]
    fn solution_json_recomputes_costs() {
        let s: Solution =
            serde_json::from_str(r#"{"paths":[[0,1,2]],"soc":99,"makespan":0}"#).unwrap();
        assert_eq!((s.soc, s.makespan), (2, 2));
    }
}
