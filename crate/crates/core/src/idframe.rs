//! Independence detection over any sum-of-costs optimal group solver.
//!
//! Agents start in singleton groups. Whenever two groups' plans conflict,
//! full ID first tries to replan one group at the same cost while avoiding
//! the other; groups that cannot be separated, or that conflicted before,
//! are merged and solved jointly. Simple ID always merges.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use web_time::Instant;

use crate::encoder::{decode_model, encode_soc};
use crate::instance::{shortest_path_costs, InstanceError, MapfInstance, Solution, VertexId};
use crate::sat::{sat_solve, SatResult};
use crate::satloop::{Encoding, Limits, SatSolver, SolveError, SolveOutcome, Status};
use crate::search::{cbs_core, first_conflict, Conflict, Constraint};
use crate::teg::{build_mdd_teg, build_teg};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IdMode {
    /// Merge every conflicting pair.
    Sid,
    /// Try same-cost replanning before merging.
    Id,
}

/// Cells `(vertex, time)` a group may not occupy.
pub type Forbidden = HashSet<(VertexId, usize)>;

/// A sum-of-costs optimal solver usable inside independence detection.
pub trait GroupSolver {
    fn solve_group(&self, instance: &MapfInstance, limits: &Limits) -> Result<SolveOutcome, SolveError>;

    /// A plan of sum-of-costs exactly `cost_budget` that avoids every
    /// forbidden cell, if one is found before the deadline.
    fn same_cost_replan(
        &self,
        instance: &MapfInstance,
        forbidden: &Forbidden,
        cost_budget: usize,
        limits: &Limits,
    ) -> Result<Option<Solution>, SolveError>;
}

impl GroupSolver for SatSolver {
    fn solve_group(&self, instance: &MapfInstance, limits: &Limits) -> Result<SolveOutcome, SolveError> {
        SatSolver::new(self.encoding, self.backend.clone(), *limits).solve_soc(instance, &mut |_, _| {})
    }

    fn same_cost_replan(
        &self,
        instance: &MapfInstance,
        forbidden: &Forbidden,
        cost_budget: usize,
        limits: &Limits,
    ) -> Result<Option<Solution>, SolveError> {
        let costs = shortest_path_costs(instance)?;
        let Some(delta) = cost_budget.checked_sub(costs.xi0_sum as usize) else {
            return Ok(None);
        };
        // Cover the forbidden cells too, so the parked tail is checked.
        let horizon = forbidden.iter().map(|&(_, t)| t).max().unwrap_or(0);
        let mu = (costs.mu0 as usize + delta).max(horizon);
        let graph = instance.graph();
        let tegs = instance
            .agents()
            .iter()
            .zip(&costs.xi0)
            .map(|(a, &xi0)| match self.encoding {
                Encoding::Basic => build_teg(graph, mu, xi0 as usize, a.start, a.goal),
                Encoding::Mdd => build_mdd_teg(graph, mu, xi0 as usize, delta, a.start, a.goal),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut enc = encode_soc(instance, tegs, delta)?;
        for agent in 0..instance.agent_count() {
            for &(v, t) in forbidden {
                enc.forbid_cell(agent, v, t);
            }
        }
        match sat_solve(&self.backend, &enc.formula, &[], limits.deadline())? {
            SatResult::Sat(model) => Ok(Some(decode_model(&enc.varmap, &model)?)),
            SatResult::Unsat | SatResult::Unknown => Ok(None),
        }
    }
}

/// Conflict-based search as a group solver.
#[derive(Debug, Clone, Copy, Default)]
pub struct CbsSolver;

impl GroupSolver for CbsSolver {
    fn solve_group(&self, instance: &MapfInstance, limits: &Limits) -> Result<SolveOutcome, SolveError> {
        crate::search::cbs_solve(instance, limits)
    }

    fn same_cost_replan(
        &self,
        instance: &MapfInstance,
        forbidden: &Forbidden,
        cost_budget: usize,
        limits: &Limits,
    ) -> Result<Option<Solution>, SolveError> {
        let base: Vec<Constraint> = (0..instance.agent_count())
            .flat_map(|agent| {
                forbidden
                    .iter()
                    .map(move |&(vertex, time)| Constraint { agent, vertex, time })
            })
            .collect();
        let (out, _) = cbs_core(instance, limits, &base, cost_budget)?;
        Ok(out.solution.filter(|s| s.soc == cost_budget))
    }
}

/// Agent groups plus the pairs of groups that have conflicted so far.
/// Groups are identified by their sorted agent sets.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupPartition {
    pub groups: Vec<Vec<usize>>,
    pub conflict_history: BTreeSet<(Vec<usize>, Vec<usize>)>,
}

impl GroupPartition {
    pub fn singletons(k: usize) -> Self {
        GroupPartition {
            groups: (0..k).map(|a| vec![a]).collect(),
            conflict_history: BTreeSet::new(),
        }
    }

    fn pair(a: &[usize], b: &[usize]) -> (Vec<usize>, Vec<usize>) {
        if a <= b {
            (a.to_vec(), b.to_vec())
        } else {
            (b.to_vec(), a.to_vec())
        }
    }

    pub fn conflicted_before(&self, a: &[usize], b: &[usize]) -> bool {
        self.conflict_history.contains(&Self::pair(a, b))
    }

    /// Records the pair; returns false if it was already present.
    pub fn record_conflict(&mut self, a: &[usize], b: &[usize]) -> bool {
        self.conflict_history.insert(Self::pair(a, b))
    }

    /// Replaces groups `i` and `j` by their union; returns its index.
    pub fn merge(&mut self, i: usize, j: usize) -> usize {
        let (lo, hi) = (i.min(j), i.max(j));
        let removed = self.groups.remove(hi);
        self.groups[lo].extend(removed);
        self.groups[lo].sort_unstable();
        lo
    }

    pub fn group_of(&self, agent: usize) -> Option<usize> {
        self.groups.iter().position(|g| g.contains(&agent))
    }
}

/// Bookkeeping of one ID run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdStats {
    pub merges: usize,
    pub replans_tried: usize,
    pub replans_succeeded: usize,
    pub largest_group: usize,
    pub partition: GroupPartition,
}

/// Cells a group must avoid so its plan is compatible with `others`,
/// through time `horizon`: the cells they occupy, the cells they step onto
/// next (which must be empty beforehand), and the cells they have just left.
pub fn forbidden_cells(others: &[Vec<VertexId>], horizon: usize) -> Forbidden {
    let at = |p: &Vec<VertexId>, t: usize| p[t.min(p.len() - 1)];
    let mut cells = Forbidden::new();
    for p in others.iter().filter(|p| !p.is_empty()) {
        for t in 0..=horizon {
            let v = at(p, t);
            cells.insert((v, t));
            cells.insert((v, t + 1));
            if t > 0 && at(p, t - 1) != v {
                cells.insert((v, t - 1));
            }
        }
    }
    cells
}

struct Group {
    paths: Vec<Vec<VertexId>>,
    soc: usize,
}

/// Same-cost replan of group `mine`. It first tries to stay clear of every
/// other group, then of `other` alone.
fn replan(
    instance: &MapfInstance,
    solver: &dyn GroupSolver,
    members: &[Vec<usize>],
    groups: &[Group],
    mine: usize,
    other: usize,
    limits: &Limits,
) -> Result<Option<Vec<Vec<VertexId>>>, SolveError> {
    let everyone: Vec<usize> = (0..groups.len()).filter(|&g| g != mine).collect();
    let mut attempts = vec![vec![other]];
    if everyone.len() > 1 {
        attempts.insert(0, everyone);
    }
    let goals: HashSet<VertexId> = members[mine].iter().map(|&m| instance.agents()[m].goal).collect();
    let sub = instance.sub_instance(&members[mine]);
    for avoid in attempts {
        let paths: Vec<Vec<VertexId>> = avoid.iter().flat_map(|&g| groups[g].paths.iter().cloned()).collect();
        // Avoided agents park on their final cells for good.
        if paths.iter().filter_map(|p| p.last()).any(|v| goals.contains(v)) {
            continue;
        }
        let horizon = paths
            .iter()
            .chain(&groups[mine].paths)
            .map(Vec::len)
            .max()
            .unwrap_or(1)
            .max(groups[mine].soc + 1);
        let forbidden = forbidden_cells(&paths, horizon);
        if let Some(sol) = solver.same_cost_replan(&sub, &forbidden, groups[mine].soc, limits)? {
            debug_assert_eq!(sol.soc, groups[mine].soc);
            return Ok(Some(sol.paths));
        }
    }
    Ok(None)
}

fn solved(out: SolveOutcome) -> Result<Group, SolveOutcome> {
    match &out.solution {
        Some(s) if out.status == Status::Optimal => Ok(Group {
            paths: s.paths.clone(),
            soc: s.soc,
        }),
        _ => Err(out),
    }
}

fn fail(status: Status, started: Instant, instance: &MapfInstance) -> SolveOutcome {
    let costs = shortest_path_costs(instance).ok();
    SolveOutcome::finish(status, None, costs.as_ref(), Vec::new(), started)
}

fn remaining(limits: &Limits, started: Instant) -> Option<Limits> {
    match limits.timeout {
        None => Some(*limits),
        Some(t) => t.checked_sub(started.elapsed()).filter(|r| !r.is_zero()).map(|r| Limits {
            timeout: Some(r),
            ..*limits
        }),
    }
}

/// Solves `instance` by independence detection around `solver`.
pub fn id_solve(
    instance: &MapfInstance,
    solver: &dyn GroupSolver,
    mode: IdMode,
    limits: &Limits,
) -> Result<SolveOutcome, SolveError> {
    id_solve_with_stats(instance, solver, mode, limits).map(|(o, _)| o)
}

pub fn id_solve_with_stats(
    instance: &MapfInstance,
    solver: &dyn GroupSolver,
    mode: IdMode,
    limits: &Limits,
) -> Result<(SolveOutcome, IdStats), SolveError> {
    let started = Instant::now();
    let k = instance.agent_count();
    let mut stats = IdStats {
        partition: GroupPartition::singletons(k),
        ..IdStats::default()
    };
    match shortest_path_costs(instance) {
        Ok(_) => {}
        Err(InstanceError::Unreachable(_)) => {
            return Ok((fail(Status::InfeasibleWithinBound, started, instance), stats))
        }
        Err(e) => return Err(e.into()),
    }

    let mut groups = Vec::with_capacity(k);
    for agent in 0..k {
        let Some(lim) = remaining(limits, started) else {
            return Ok((fail(Status::Timeout, started, instance), stats));
        };
        match solved(solver.solve_group(&instance.sub_instance(&[agent]), &lim)?) {
            Ok(g) => groups.push(g),
            Err(out) => return Ok((fail(out.status, started, instance), stats)),
        }
    }

    loop {
        stats.largest_group = stats.partition.groups.iter().map(Vec::len).max().unwrap_or(0);
        let mut all = vec![Vec::new(); k];
        for (members, g) in stats.partition.groups.iter().zip(&groups) {
            for (&a, p) in members.iter().zip(&g.paths) {
                all[a] = p.clone();
            }
        }
        let Some(conflict) = first_conflict(&all) else {
            let solution = Solution::from_paths(all);
            debug_assert_eq!(solution.soc, groups.iter().map(|g| g.soc).sum::<usize>());
            let costs = shortest_path_costs(instance)?;
            let out = SolveOutcome::finish(Status::Optimal, Some(solution), Some(&costs), Vec::new(), started);
            return Ok((out, stats));
        };
        let (a, b) = match conflict {
            Conflict::Vertex { a, b, .. } => (a, b),
            Conflict::Follow { mover, occupant, .. } => (mover, occupant),
        };
        let gi = stats.partition.group_of(a).expect("agent in a group");
        let gj = stats.partition.group_of(b).expect("agent in a group");
        debug_assert_ne!(gi, gj);

        let Some(lim) = remaining(limits, started) else {
            return Ok((fail(Status::Timeout, started, instance), stats));
        };
        let first_time = stats.partition.record_conflict(&stats.partition.groups[gi].clone(), &stats.partition.groups[gj].clone());
        if mode == IdMode::Id && first_time {
            let (small, large) = if stats.partition.groups[gj].len() < stats.partition.groups[gi].len() {
                (gj, gi)
            } else {
                (gi, gj)
            };
            let mut replanned = false;
            for (mine, other) in [(small, large), (large, small)] {
                stats.replans_tried += 1;
                if let Some(paths) = replan(instance, solver, &stats.partition.groups, &groups, mine, other, &lim)? {
                    groups[mine].paths = paths;
                    stats.replans_succeeded += 1;
                    replanned = true;
                    break;
                }
            }
            if replanned {
                continue;
            }
        }

        let merged = stats.partition.merge(gi, gj);
        groups.remove(gi.max(gj));
        stats.merges += 1;
        let members = stats.partition.groups[merged].clone();
        match solved(solver.solve_group(&instance.sub_instance(&members), &lim)?) {
            Ok(g) => groups[merged] = g,
            Err(out) => return Ok((fail(out.status, started, instance), stats)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{parse_map, validate_solution, Agent, Graph};
    use crate::satloop::solve_soc_optimal;
    use crate::sat::SatBackend;

    fn sat() -> SatSolver {
        SatSolver::default()
    }

    #[test]
    fn disjoint_components_never_merge() {
        let g = Graph::new(6, [(0, 1), (1, 2), (3, 4), (4, 5)]).unwrap();
        let inst = MapfInstance::new(g, vec![Agent { start: 0, goal: 2 }, Agent { start: 3, goal: 5 }]).unwrap();
        for mode in [IdMode::Sid, IdMode::Id] {
            let (out, stats) = id_solve_with_stats(&inst, &sat(), mode, &Limits::default()).unwrap();
            assert_eq!(out.soc(), Some(4));
            assert_eq!(stats.merges, 0);
            assert_eq!(stats.largest_group, 1);
        }
    }

    #[test]
    fn crossing_pair_is_merged_and_optimal() {
        let g = parse_map("type octile\nheight 2\nwidth 2\nmap\n..\n..\n").unwrap();
        let inst = MapfInstance::new(g, vec![Agent { start: 0, goal: 3 }, Agent { start: 3, goal: 0 }]).unwrap();
        let direct = solve_soc_optimal(&inst, Encoding::Mdd, &SatBackend::Embedded, &Limits::default()).unwrap();
        for mode in [IdMode::Sid, IdMode::Id] {
            for solver in [&sat() as &dyn GroupSolver, &CbsSolver] {
                let out = id_solve(&inst, solver, mode, &Limits::default()).unwrap();
                let sol = out.solution.as_ref().unwrap();
                assert!(validate_solution(&inst, sol).ok);
                assert_eq!(out.soc(), direct.soc());
            }
        }
    }

    #[test]
    fn replan_avoids_merge() {
        // Two corridors joined at vertex 2; agent 1 can take the long way.
        //   0 - 1 - 2 - 3
        //           |   |
        //           4 - 5
        let g = Graph::new(6, [(0, 1), (1, 2), (2, 3), (2, 4), (4, 5), (3, 5)]).unwrap();
        let inst = MapfInstance::new(g, vec![Agent { start: 0, goal: 3 }, Agent { start: 4, goal: 2 }]).unwrap();
        let direct = solve_soc_optimal(&inst, Encoding::Mdd, &SatBackend::Embedded, &Limits::default()).unwrap();
        let out = id_solve(&inst, &sat(), IdMode::Id, &Limits::default()).unwrap();
        assert!(validate_solution(&inst, out.solution.as_ref().unwrap()).ok);
        assert_eq!(out.soc(), direct.soc());
    }

    #[test]
    fn replan_with_empty_forbidden_set_keeps_cost() {
        let g = Graph::new(3, [(0, 1), (1, 2)]).unwrap();
        let inst = MapfInstance::new(g, vec![Agent { start: 0, goal: 2 }]).unwrap();
        let sol = sat().same_cost_replan(&inst, &Forbidden::new(), 2, &Limits::default()).unwrap();
        assert_eq!(sol.unwrap().soc, 2);
        let sol = CbsSolver.same_cost_replan(&inst, &Forbidden::new(), 2, &Limits::default()).unwrap();
        assert_eq!(sol.unwrap().soc, 2);
    }

    #[test]
    fn replan_fails_on_unavoidable_cell() {
        let g = Graph::new(3, [(0, 1), (1, 2)]).unwrap();
        let inst = MapfInstance::new(g, vec![Agent { start: 0, goal: 2 }]).unwrap();
        let forbidden = Forbidden::from([(1, 1)]);
        assert_eq!(sat().same_cost_replan(&inst, &forbidden, 2, &Limits::default()).unwrap(), None);
        assert_eq!(CbsSolver.same_cost_replan(&inst, &forbidden, 2, &Limits::default()).unwrap(), None);
        // Off-path cells change nothing.
        let forbidden = Forbidden::from([(2, 0), (0, 2)]);
        assert!(sat().same_cost_replan(&inst, &forbidden, 2, &Limits::default()).unwrap().is_some());
    }

    #[test]
    fn partition_bookkeeping() {
        let mut p = GroupPartition::singletons(3);
        assert!(p.record_conflict(&[2], &[0]));
        assert!(p.conflicted_before(&[0], &[2]));
        assert!(!p.record_conflict(&[0], &[2]));
        let m = p.merge(2, 0);
        assert_eq!(m, 0);
        assert_eq!(p.groups, vec![vec![0, 2], vec![1]]);
        assert_eq!(p.group_of(2), Some(0));
    }

    #[test]
    fn forbidden_cells_cover_target_rule() {
        let cells = forbidden_cells(&[vec![0, 1]], 2);
        // Occupied, just-vacated and about-to-be-entered cells.
        for c in [(0, 0), (0, 1), (1, 0), (1, 1), (1, 2), (1, 3)] {
            assert!(cells.contains(&c), "{c:?}");
        }
        assert!(!cells.contains(&(0, 2)));
    }
}
