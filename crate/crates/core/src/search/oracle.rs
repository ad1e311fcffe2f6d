//! Brute-force joint-state search used as ground truth in tests and
//! experiments.
//!
//! A joint state holds every agent's vertex and whether it has committed to
//! staying at its goal for good. A step moves all uncommitted agents at once
//! (wait or move under the target-empty rule) and costs one per uncommitted
//! agent; committing is free. The cheapest path to "all committed" is the
//! optimal sum-of-costs.

use std::cmp::Reverse;
use std::collections::hash_map::Entry;
use std::collections::{BinaryHeap, HashMap, HashSet, VecDeque};

use thiserror::Error;

use crate::instance::{Graph, MapfInstance, Solution, VertexId, UNREACHABLE};

/// Default cap on the joint state space the oracle agrees to explore.
pub const DEFAULT_STATE_BOUND: u64 = 20_000_000;

const POS_BITS: u32 = 12;
const MAX_AGENTS: usize = 8;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("joint state space of about {states} states exceeds the bound {bound}")]
    StateSpaceTooLarge { states: u128, bound: u64 },
    #[error("oracle supports at most {MAX_AGENTS} agents and {} vertices", 1u32 << POS_BITS)]
    Unsupported,
}

#[derive(Debug, Clone, Copy)]
pub struct OracleConfig {
    pub state_bound: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            state_bound: DEFAULT_STATE_BOUND,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleSolution {
    pub soc: usize,
    pub solution: Solution,
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct Key(u128);

fn pack(pos: &[VertexId], done: u32, t: usize) -> Key {
    let mut key = 0u128;
    for &p in pos {
        key = (key << POS_BITS) | p as u128;
    }
    key = (key << MAX_AGENTS) | done as u128;
    Key((key << 16) | t as u128)
}

fn check_size(instance: &MapfInstance, extra: u128, cfg: &OracleConfig) -> Result<(), OracleError> {
    let k = instance.agent_count();
    let n = instance.graph().vertex_count();
    if k > MAX_AGENTS || n >= 1 << POS_BITS {
        return Err(OracleError::Unsupported);
    }
    let states = (n as u128).saturating_pow(k as u32).saturating_mul(extra);
    if states > cfg.state_bound as u128 {
        return Err(OracleError::StateSpaceTooLarge {
            states,
            bound: cfg.state_bound,
        });
    }
    Ok(())
}

/// Every joint successor of `pos` in which the agents flagged in `moving`
/// act and the rest stay put.
fn joint_moves(
    instance: &MapfInstance,
    pos: &[VertexId],
    moving: &[bool],
    out: &mut Vec<Vec<VertexId>>,
) {
    let graph = instance.graph();
    let mut occupied_now = vec![false; graph.vertex_count()];
    for &p in pos {
        occupied_now[p] = true;
    }
    let mut taken = vec![false; graph.vertex_count()];
    for (i, &p) in pos.iter().enumerate() {
        if !moving[i] {
            taken[p] = true;
        }
    }
    let mut walk = MoveWalk {
        graph,
        pos,
        moving,
        occupied_now,
        taken,
        next: pos.to_vec(),
        out,
    };
    walk.rec(0);
}

struct MoveWalk<'a> {
    graph: &'a Graph,
    pos: &'a [VertexId],
    moving: &'a [bool],
    occupied_now: Vec<bool>,
    taken: Vec<bool>,
    next: Vec<VertexId>,
    out: &'a mut Vec<Vec<VertexId>>,
}

impl MoveWalk<'_> {
    fn rec(&mut self, i: usize) {
        if i == self.pos.len() {
            self.out.push(self.next.clone());
            return;
        }
        if !self.moving[i] {
            self.rec(i + 1);
            return;
        }
        let here = self.pos[i];
        let graph = self.graph;
        for v in std::iter::once(here).chain(graph.neighbors(here).iter().copied()) {
            if self.taken[v] || (v != here && self.occupied_now[v]) {
                continue;
            }
            self.taken[v] = true;
            self.next[i] = v;
            self.rec(i + 1);
            self.taken[v] = false;
        }
        self.next[i] = here;
    }
}

struct Node {
    pos: Vec<VertexId>,
    done: u32,
    t: usize,
    g: usize,
    parent: Option<Key>,
}

/// Sum-of-costs optimum, optionally among plans that finish by `makespan_cap`
/// and cost at most `soc_cap`. `Ok(None)` means no such plan exists.
pub fn oracle_solve_with(
    instance: &MapfInstance,
    soc_cap: Option<usize>,
    makespan_cap: Option<usize>,
    cfg: &OracleConfig,
) -> Result<Option<OracleSolution>, OracleError> {
    let k = instance.agent_count();
    let extra = (1u128 << k).saturating_mul(makespan_cap.map_or(1, |m| m as u128 + 1));
    check_size(instance, extra, cfg)?;
    if makespan_cap.is_some_and(|m| m >= 1 << 16) {
        return Err(OracleError::Unsupported);
    }
    let agents = instance.agents();
    let to_goal: Vec<Vec<u32>> = agents
        .iter()
        .map(|a| instance.graph().bfs_distances(a.goal))
        .collect();
    if agents.iter().zip(&to_goal).any(|(a, d)| d[a.start] == UNREACHABLE) {
        return Ok(None);
    }
    let all_done = if k == 0 { 0 } else { u32::MAX >> (32 - k) };
    let timed = makespan_cap.is_some();
    let h = |pos: &[VertexId], done: u32| -> usize {
        (0..k)
            .filter(|&i| done & (1 << i) == 0)
            .map(|i| to_goal[i][pos[i]] as usize)
            .sum()
    };

    let start: Vec<VertexId> = agents.iter().map(|a| a.start).collect();
    let start_key = pack(&start, 0, 0);
    let mut nodes: HashMap<Key, Node> = HashMap::new();
    let mut open = BinaryHeap::new();
    open.push(Reverse((h(&start, 0), 0usize, start_key)));
    nodes.insert(
        start_key,
        Node {
            pos: start,
            done: 0,
            t: 0,
            g: 0,
            parent: None,
        },
    );
    let mut closed: HashSet<Key> = HashSet::new();
    let mut successors = Vec::new();

    while let Some(Reverse((_, g, key))) = open.pop() {
        let (pos, done, t) = {
            let n = &nodes[&key];
            if n.g != g || !closed.insert(key) {
                continue;
            }
            (n.pos.clone(), n.done, n.t)
        };
        if done == all_done {
            return Ok(Some(rebuild(instance, &nodes, key, g)));
        }

        let mut relax = |npos: Vec<VertexId>, ndone: u32, nt: usize, ng: usize, nodes: &mut HashMap<Key, Node>| {
            if soc_cap.is_some_and(|cap| ng + h(&npos, ndone) > cap) {
                return;
            }
            let nkey = pack(&npos, ndone, if timed { nt } else { 0 });
            if closed.contains(&nkey) {
                return;
            }
            if nodes.get(&nkey).is_some_and(|n| n.g <= ng) {
                return;
            }
            let f = ng + h(&npos, ndone);
            nodes.insert(
                nkey,
                Node {
                    pos: npos,
                    done: ndone,
                    t: nt,
                    g: ng,
                    parent: Some(key),
                },
            );
            open.push(Reverse((f, ng, nkey)));
        };

        for i in 0..k {
            if done & (1 << i) == 0 && pos[i] == agents[i].goal {
                relax(pos.clone(), done | (1 << i), t, g, &mut nodes);
            }
        }
        if makespan_cap.is_some_and(|cap| t >= cap) {
            continue;
        }
        let moving: Vec<bool> = (0..k).map(|i| done & (1 << i) == 0).collect();
        let step_cost = moving.iter().filter(|&&m| m).count();
        successors.clear();
        joint_moves(instance, &pos, &moving, &mut successors);
        for npos in successors.drain(..) {
            relax(npos, done, t + 1, g + step_cost, &mut nodes);
        }
    }
    Ok(None)
}

fn rebuild(instance: &MapfInstance, nodes: &HashMap<Key, Node>, goal: Key, soc: usize) -> OracleSolution {
    let mut chain = Vec::new();
    let mut cur = Some(goal);
    while let Some(key) = cur {
        let node = &nodes[&key];
        chain.push(node);
        cur = node.parent;
    }
    chain.reverse();
    let k = instance.agent_count();
    let mut paths: Vec<Vec<VertexId>> = vec![Vec::new(); k];
    let mut last_t = None;
    for node in chain {
        // Commit transitions repeat the time step; keep one snapshot per step.
        if last_t == Some(node.t) && node.parent.is_some() {
            let same_positions = (0..k).all(|i| *paths[i].last().unwrap() == node.pos[i]);
            if same_positions {
                continue;
            }
        }
        for (i, path) in paths.iter_mut().enumerate() {
            path.push(node.pos[i]);
        }
        last_t = Some(node.t);
    }
    let solution = Solution::from_paths(paths);
    debug_assert_eq!(solution.soc, soc);
    OracleSolution { soc, solution }
}

/// Sum-of-costs optimum up to `soc_cap`.
pub fn oracle_solve(
    instance: &MapfInstance,
    soc_cap: Option<usize>,
) -> Result<Option<OracleSolution>, OracleError> {
    oracle_solve_with(instance, soc_cap, None, &OracleConfig::default())
}

/// Minimal makespan by breadth-first search over joint positions.
pub fn oracle_makespan(
    instance: &MapfInstance,
    makespan_cap: Option<usize>,
    cfg: &OracleConfig,
) -> Result<Option<usize>, OracleError> {
    check_size(instance, 1, cfg)?;
    let k = instance.agent_count();
    let start: Vec<VertexId> = instance.agents().iter().map(|a| a.start).collect();
    let goal: Vec<VertexId> = instance.agents().iter().map(|a| a.goal).collect();
    let moving = vec![true; k];
    let mut depth: HashMap<Key, usize> = HashMap::from([(pack(&start, 0, 0), 0)]);
    let mut queue = VecDeque::from([start]);
    let mut successors = Vec::new();
    while let Some(pos) = queue.pop_front() {
        let d = depth[&pack(&pos, 0, 0)];
        if pos == goal {
            return Ok(Some(d));
        }
        if makespan_cap.is_some_and(|cap| d >= cap) {
            continue;
        }
        successors.clear();
        joint_moves(instance, &pos, &moving, &mut successors);
        for next in successors.drain(..) {
            if let Entry::Vacant(e) = depth.entry(pack(&next, 0, 0)) {
                e.insert(d + 1);
                queue.push_back(next);
            }
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{parse_map, shortest_path_costs, validate_solution, Agent, Graph};

    fn square() -> Graph {
        parse_map("type octile\nheight 2\nwidth 2\nmap\n..\n..\n").unwrap()
    }

    #[test]
    fn single_agent_matches_bfs() {
        let g = Graph::new(4, [(0, 1), (1, 2), (2, 3)]).unwrap();
        let inst = MapfInstance::new(g, vec![Agent { start: 0, goal: 3 }]).unwrap();
        let sol = oracle_solve(&inst, None).unwrap().unwrap();
        assert_eq!(sol.soc, 3);
        assert_eq!(sol.solution.paths, vec![vec![0, 1, 2, 3]]);
    }

    #[test]
    fn swap_on_edge_is_infeasible() {
        let g = Graph::new(2, [(0, 1)]).unwrap();
        let inst = MapfInstance::new(g, vec![Agent { start: 0, goal: 1 }, Agent { start: 1, goal: 0 }]).unwrap();
        assert_eq!(oracle_solve(&inst, None).unwrap(), None);
        assert_eq!(oracle_makespan(&inst, None, &OracleConfig::default()).unwrap(), None);
    }

    #[test]
    fn square_crossing_costs_four() {
        let inst = MapfInstance::new(square(), vec![Agent { start: 0, goal: 3 }, Agent { start: 3, goal: 0 }]).unwrap();
        let sol = oracle_solve(&inst, None).unwrap().unwrap();
        assert_eq!(sol.soc, 4);
        assert!(validate_solution(&inst, &sol.solution).ok);
        assert_eq!(oracle_makespan(&inst, None, &OracleConfig::default()).unwrap(), Some(2));
    }

    #[test]
    fn corridor_pocket_requires_detour() {
        // 0-1-2-3 corridor with pocket 4 hanging off 1.
        let g = Graph::new(5, [(0, 1), (1, 2), (2, 3), (1, 4)]).unwrap();
        let inst = MapfInstance::new(g, vec![Agent { start: 0, goal: 3 }, Agent { start: 3, goal: 0 }]).unwrap();
        let sol = oracle_solve(&inst, None).unwrap().unwrap();
        let lb = shortest_path_costs(&inst).unwrap().xi0_sum as usize;
        assert!(sol.soc > lb);
        assert!(validate_solution(&inst, &sol.solution).ok);
        assert_eq!(sol.solution.soc, sol.soc);
    }

    #[test]
    fn caps_prune_solutions() {
        let inst = MapfInstance::new(square(), vec![Agent { start: 0, goal: 3 }, Agent { start: 3, goal: 0 }]).unwrap();
        assert_eq!(oracle_solve(&inst, Some(3)).unwrap(), None);
        let cfg = OracleConfig::default();
        assert_eq!(oracle_solve_with(&inst, None, Some(1), &cfg).unwrap(), None);
        assert_eq!(oracle_solve_with(&inst, None, Some(2), &cfg).unwrap().unwrap().soc, 4);
    }

    #[test]
    fn state_bound_is_enforced() {
        let inst = MapfInstance::new(square(), vec![Agent { start: 0, goal: 3 }, Agent { start: 3, goal: 0 }]).unwrap();
        let cfg = OracleConfig { state_bound: 10 };
        assert!(matches!(
            oracle_solve_with(&inst, None, None, &cfg),
            Err(OracleError::StateSpaceTooLarge { .. })
        ));
    }
}
