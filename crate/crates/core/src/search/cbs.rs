//! Conflict-based search for sum-of-costs under the target-empty rule.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::sync::Arc;

use web_time::Instant;

use crate::instance::{shortest_path_costs, MapfInstance, Solution, VertexId, UNREACHABLE};
use crate::satloop::{Limits, SolveError, SolveOutcome, Status};

/// Agent `agent` must not be at `vertex` at `time`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Constraint {
    pub agent: usize,
    pub vertex: VertexId,
    pub time: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Conflict {
    /// Both agents at `vertex` at `time`.
    Vertex { a: usize, b: usize, vertex: VertexId, time: usize },
    /// `mover` enters `vertex` at `time + 1` while `occupant` is on it at `time`.
    Follow { mover: usize, occupant: usize, vertex: VertexId, time: usize },
}

impl Conflict {
    fn branches(self) -> [Constraint; 2] {
        match self {
            Conflict::Vertex { a, b, vertex, time } => [
                Constraint { agent: a, vertex, time },
                Constraint { agent: b, vertex, time },
            ],
            Conflict::Follow { mover, occupant, vertex, time } => [
                Constraint { agent: occupant, vertex, time },
                Constraint { agent: mover, vertex, time: time + 1 },
            ],
        }
    }
}

fn at(path: &[VertexId], t: usize) -> VertexId {
    path[t.min(path.len() - 1)]
}

/// Earliest conflict among `paths`, each padded with goal waits.
pub fn first_conflict(paths: &[Vec<VertexId>]) -> Option<Conflict> {
    let horizon = paths.iter().map(Vec::len).max().unwrap_or(0);
    let mut seen: HashMap<VertexId, usize> = HashMap::new();
    for t in 0..horizon {
        seen.clear();
        for (i, p) in paths.iter().enumerate() {
            if let Some(&j) = seen.get(&at(p, t)) {
                return Some(Conflict::Vertex { a: j, b: i, vertex: at(p, t), time: t });
            }
            seen.insert(at(p, t), i);
        }
        if t + 1 >= horizon {
            break;
        }
        for (i, p) in paths.iter().enumerate() {
            let (from, to) = (at(p, t), at(p, t + 1));
            if from == to {
                continue;
            }
            if let Some(&h) = seen.get(&to) {
                return Some(Conflict::Follow { mover: i, occupant: h, vertex: to, time: t });
            }
        }
    }
    None
}

fn count_conflicts(paths: &[Vec<VertexId>]) -> usize {
    let horizon = paths.iter().map(Vec::len).max().unwrap_or(0);
    let mut n = 0;
    for t in 0..horizon {
        for i in 0..paths.len() {
            for j in i + 1..paths.len() {
                if at(&paths[i], t) == at(&paths[j], t) {
                    n += 1;
                }
            }
        }
    }
    n
}

/// Positions of other agents used to break ties between equal-cost paths.
#[derive(Default)]
struct Reservations {
    cells: HashMap<(VertexId, usize), u32>,
    parked: HashMap<VertexId, (usize, u32)>,
}

impl Reservations {
    fn new(paths: &[Vec<VertexId>], skip: usize) -> Self {
        let mut r = Reservations::default();
        for (i, p) in paths.iter().enumerate() {
            if i == skip || p.is_empty() {
                continue;
            }
            for (t, &v) in p.iter().enumerate() {
                *r.cells.entry((v, t)).or_default() += 1;
            }
            let e = r.parked.entry(*p.last().unwrap()).or_insert((p.len(), 0));
            e.0 = e.0.min(p.len());
            e.1 += 1;
        }
        r
    }

    fn count(&self, v: VertexId, t: usize) -> u32 {
        let direct = self.cells.get(&(v, t)).copied().unwrap_or(0);
        let parked = match self.parked.get(&v) {
            Some(&(from, n)) if t >= from => n,
            _ => 0,
        };
        direct + parked
    }
}

/// Space-time A* for one agent. Returns the cheapest path avoiding every
/// constraint on `agent`, ending at its goal with no later goal constraint.
/// Paths whose cost would exceed `cost_cap` are pruned.
pub fn low_level_astar(
    instance: &MapfInstance,
    agent: usize,
    constraints: &[Constraint],
    cost_cap: Option<usize>,
) -> Option<Vec<VertexId>> {
    let to_goal = instance.graph().bfs_distances(instance.agents()[agent].goal);
    astar(instance, agent, constraints, cost_cap, &to_goal, &Reservations::default())
}

fn astar(
    instance: &MapfInstance,
    agent: usize,
    constraints: &[Constraint],
    cost_cap: Option<usize>,
    to_goal: &[u32],
    reserved: &Reservations,
) -> Option<Vec<VertexId>> {
    let graph = instance.graph();
    let (start, goal) = (instance.agents()[agent].start, instance.agents()[agent].goal);
    let blocked: HashSet<(VertexId, usize)> = constraints
        .iter()
        .filter(|c| c.agent == agent)
        .map(|c| (c.vertex, c.time))
        .collect();
    if blocked.contains(&(start, 0)) || to_goal[start] == UNREACHABLE {
        return None;
    }
    // Beyond the last constrained step every time behaves the same, so
    // states are keyed by the clamped time.
    let t_max = blocked.iter().map(|&(_, t)| t).max().unwrap_or(0);
    let last_goal_block = blocked.iter().filter(|&&(v, _)| v == goal).map(|&(_, t)| t).max();
    let key = |v: VertexId, t: usize| (v, t.min(t_max + 1));

    // Path cost is the arrival time at the goal, so g is the time step.
    // Each key maps to (time, conflicts, parent key).
    type Key = (VertexId, usize);
    let mut best: HashMap<Key, (usize, u32, Option<Key>)> = HashMap::new();
    let mut closed = HashSet::new();
    let mut open = BinaryHeap::new();
    best.insert(key(start, 0), (0, 0, None));
    open.push(Reverse((to_goal[start] as usize, 0u32, 0usize, start)));

    while let Some(Reverse((_, conflicts, t, v))) = open.pop() {
        let k = key(v, t);
        if best[&k].0 != t || best[&k].1 != conflicts || !closed.insert(k) {
            continue;
        }
        if v == goal && last_goal_block.is_none_or(|b| t > b) {
            let mut path = vec![v];
            let mut cur = best[&k].2;
            while let Some(p) = cur {
                path.push(p.0);
                cur = best[&p].2;
            }
            path.reverse();
            return Some(path);
        }
        let nt = t + 1;
        for w in std::iter::once(v).chain(graph.neighbors(v).iter().copied()) {
            if blocked.contains(&(w, nt)) || to_goal[w] == UNREACHABLE {
                continue;
            }
            let f = nt + to_goal[w] as usize;
            if cost_cap.is_some_and(|cap| f > cap) {
                continue;
            }
            let nk = key(w, nt);
            if closed.contains(&nk) {
                continue;
            }
            let nc = conflicts + reserved.count(w, nt);
            let improves = match best.get(&nk) {
                None => true,
                Some(&(bt, bc, _)) => (nt, nc) < (bt, bc),
            };
            if improves {
                best.insert(nk, (nt, nc, Some(k)));
                open.push(Reverse((f, nc, nt, w)));
            }
        }
    }
    None
}

/// Search statistics of a CBS run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CbsStats {
    pub expanded: usize,
    pub generated: usize,
    /// Children cheaper than their parent. Always zero for a correct search.
    pub cost_decreases: usize,
}

struct CtNode {
    constraints: Arc<Vec<Constraint>>,
    paths: Vec<Vec<VertexId>>,
    cost: usize,
}

fn soc_of(paths: &[Vec<VertexId>]) -> usize {
    paths.iter().map(|p| p.len() - 1).sum()
}

/// Runs CBS until an optimal plan is found, the cost exceeds the
/// shortest-path bound plus `limits.delta_cap`, or the deadline passes.
pub fn cbs_solve(instance: &MapfInstance, limits: &Limits) -> Result<SolveOutcome, SolveError> {
    cbs_solve_with_stats(instance, limits).map(|(o, _)| o)
}

pub fn cbs_solve_with_stats(
    instance: &MapfInstance,
    limits: &Limits,
) -> Result<(SolveOutcome, CbsStats), SolveError> {
    let bound = match shortest_path_costs(instance) {
        Ok(c) => c.xi0_sum as usize + limits.delta_cap,
        Err(_) => 0,
    };
    cbs_core(instance, limits, &[], bound)
}

/// CBS whose root already carries `base` constraints, giving up once every
/// open node costs more than `bound`.
pub(crate) fn cbs_core(
    instance: &MapfInstance,
    limits: &Limits,
    base: &[Constraint],
    bound: usize,
) -> Result<(SolveOutcome, CbsStats), SolveError> {
    let started = Instant::now();
    let deadline = limits.deadline();
    let mut stats = CbsStats::default();
    let costs = match shortest_path_costs(instance) {
        Ok(c) => c,
        Err(_) => {
            let out = SolveOutcome::finish(Status::InfeasibleWithinBound, None, None, Vec::new(), started);
            return Ok((out, stats));
        }
    };
    let k = instance.agent_count();
    let to_goal: Vec<Vec<u32>> = instance
        .agents()
        .iter()
        .map(|a| instance.graph().bfs_distances(a.goal))
        .collect();

    let mut root_paths: Vec<Vec<VertexId>> = Vec::with_capacity(k);
    for (a, dist) in to_goal.iter().enumerate() {
        let reserved = Reservations::new(&root_paths, usize::MAX);
        match astar(instance, a, base, Some(bound), dist, &reserved) {
            Some(p) => root_paths.push(p),
            None => {
                let out = SolveOutcome::finish(Status::InfeasibleWithinBound, None, Some(&costs), Vec::new(), started);
                return Ok((out, stats));
            }
        }
    }
    let mut nodes = vec![CtNode {
        constraints: Arc::new(base.to_vec()),
        cost: soc_of(&root_paths),
        paths: root_paths,
    }];
    let mut open = BinaryHeap::new();
    open.push(Reverse((nodes[0].cost, count_conflicts(&nodes[0].paths), 0usize)));

    while let Some(Reverse((cost, _, id))) = open.pop() {
        if deadline.is_some_and(|d| Instant::now() >= d) {
            let out = SolveOutcome::finish(Status::Timeout, None, Some(&costs), Vec::new(), started);
            return Ok((out, stats));
        }
        if cost > bound {
            break;
        }
        stats.expanded += 1;
        let Some(conflict) = first_conflict(&nodes[id].paths) else {
            let solution = Solution::from_paths(std::mem::take(&mut nodes[id].paths));
            debug_assert_eq!(solution.soc, cost);
            let out = SolveOutcome::finish(Status::Optimal, Some(solution), Some(&costs), Vec::new(), started);
            return Ok((out, stats));
        };
        for c in conflict.branches() {
            let parent = &nodes[id];
            if parent.constraints.contains(&c) {
                continue;
            }
            let mut constraints = (*parent.constraints).clone();
            constraints.push(c);
            let reserved = Reservations::new(&parent.paths, c.agent);
            let cap = bound - (parent.cost - (parent.paths[c.agent].len() - 1));
            let Some(path) = astar(instance, c.agent, &constraints, Some(cap), &to_goal[c.agent], &reserved) else {
                continue;
            };
            let mut paths = parent.paths.clone();
            paths[c.agent] = path;
            let child_cost = soc_of(&paths);
            if child_cost < parent.cost {
                stats.cost_decreases += 1;
            }
            let conflicts = count_conflicts(&paths);
            nodes.push(CtNode {
                constraints: Arc::new(constraints),
                paths,
                cost: child_cost,
            });
            stats.generated += 1;
            open.push(Reverse((child_cost, conflicts, nodes.len() - 1)));
        }
        // Expanded nodes keep only their constraints.
        nodes[id].paths = Vec::new();
    }
    let out = SolveOutcome::finish(Status::InfeasibleWithinBound, None, Some(&costs), Vec::new(), started);
    Ok((out, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{parse_map, validate_solution, Agent, Graph};

    #[test]
    fn low_level_respects_constraints() {
        let g = Graph::new(4, [(0, 1), (1, 2), (2, 3)]).unwrap();
        let inst = MapfInstance::new(g, vec![Agent { start: 0, goal: 3 }]).unwrap();
        assert_eq!(low_level_astar(&inst, 0, &[], None).unwrap(), vec![0, 1, 2, 3]);
        let c = [Constraint { agent: 0, vertex: 2, time: 2 }];
        let p = low_level_astar(&inst, 0, &c, None).unwrap();
        assert_eq!(p.len(), 5);
        assert_ne!(p[2], 2);
        assert_eq!(low_level_astar(&inst, 0, &c, Some(3)), None);
        // Other agents' constraints are ignored.
        let c = [Constraint { agent: 1, vertex: 2, time: 2 }];
        assert_eq!(low_level_astar(&inst, 0, &c, None).unwrap().len(), 4);
    }

    #[test]
    fn goal_constraint_delays_arrival() {
        let g = Graph::new(3, [(0, 1), (1, 2)]).unwrap();
        let inst = MapfInstance::new(g, vec![Agent { start: 0, goal: 2 }]).unwrap();
        let c = [Constraint { agent: 0, vertex: 2, time: 5 }];
        let p = low_level_astar(&inst, 0, &c, None).unwrap();
        assert_eq!(p.len(), 7);
        assert_eq!(*p.last().unwrap(), 2);
        assert_ne!(p[5], 2);
    }

    #[test]
    fn follow_conflicts_are_detected() {
        // Agent 1 steps onto vertex 1 as agent 0 leaves it.
        let paths = vec![vec![1, 2], vec![0, 1]];
        assert_eq!(
            first_conflict(&paths),
            Some(Conflict::Follow { mover: 1, occupant: 0, vertex: 1, time: 0 })
        );
        let paths = vec![vec![0, 1], vec![2, 1]];
        assert_eq!(first_conflict(&paths), Some(Conflict::Vertex { a: 0, b: 1, vertex: 1, time: 1 }));
        assert_eq!(first_conflict(&[vec![0, 1], vec![3, 2]]), None);
    }

    #[test]
    fn solves_square_crossing() {
        let g = parse_map("type octile\nheight 2\nwidth 2\nmap\n..\n..\n").unwrap();
        let inst = MapfInstance::new(g, vec![Agent { start: 0, goal: 3 }, Agent { start: 3, goal: 0 }]).unwrap();
        let (out, stats) = cbs_solve_with_stats(&inst, &Limits::default()).unwrap();
        assert_eq!(out.status, Status::Optimal);
        let sol = out.solution.unwrap();
        assert_eq!(sol.soc, 4);
        assert!(validate_solution(&inst, &sol).ok);
        assert_eq!(stats.cost_decreases, 0);
    }

    #[test]
    fn swap_exhausts_bound() {
        let g = Graph::new(2, [(0, 1)]).unwrap();
        let inst = MapfInstance::new(g, vec![Agent { start: 0, goal: 1 }, Agent { start: 1, goal: 0 }]).unwrap();
        let limits = Limits { delta_cap: 4, ..Limits::default() };
        let out = cbs_solve(&inst, &limits).unwrap();
        assert_eq!(out.status, Status::InfeasibleWithinBound);
        assert!(out.solution.is_none());
    }

    #[test]
    fn train_of_agents_moves_in_sequence() {
        // 0-1-2-3-4: agents at 0 and 1 head to 3 and 4. The front agent must
        // leave before the rear one can enter its cell.
        let g = Graph::new(5, [(0, 1), (1, 2), (2, 3), (3, 4)]).unwrap();
        let inst = MapfInstance::new(g, vec![Agent { start: 0, goal: 3 }, Agent { start: 1, goal: 4 }]).unwrap();
        let out = cbs_solve(&inst, &Limits::default()).unwrap();
        let sol = out.solution.unwrap();
        assert!(validate_solution(&inst, &sol).ok);
        assert_eq!(sol.soc, 7);
    }
}
