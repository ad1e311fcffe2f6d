//! Optimisation loops that turn the decision formulas into optimal plans.
//!
//! Sum-of-costs mode asks, for `delta = 0, 1, 2, ...`, whether a plan of cost
//! `xi0_sum + delta` exists in TEGs of depth `mu0 + delta`; makespan mode asks
//! whether a plan of makespan `mu = mu0, mu0 + 1, ...` exists. Each query is
//! encoded from scratch and the first satisfiable one is optimal.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use web_time::Instant;

use crate::encoder::{decode_model, encode_makespan, encode_soc, EncodeError, Encoded};
use crate::instance::{shortest_path_costs, InstanceError, MapfInstance, PathCosts, Solution};
use crate::sat::{sat_solve, SatBackend, SatError, SatResult};
use crate::teg::{build_mdd_teg, build_teg, Teg, TegError};

pub const DEFAULT_DELTA_CAP: usize = 64;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error(transparent)]
    Teg(#[from] TegError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Sat(#[from] SatError),
    #[error("unsupported: {0}")]
    Unsupported(&'static str),
}

/// Which TEGs the formulas are built over.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Encoding {
    /// Every graph vertex in every layer.
    Basic,
    /// Layers pruned to vertices on some path within the cost budget.
    #[default]
    Mdd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    Soc,
    Makespan,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    pub timeout: Option<Duration>,
    /// Largest slack (sum-of-costs mode) or makespan increment over `mu0`
    /// tried before giving up.
    pub delta_cap: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            timeout: None,
            delta_cap: DEFAULT_DELTA_CAP,
        }
    }
}

impl Limits {
    pub fn with_timeout(timeout: Duration) -> Self {
        Limits {
            timeout: Some(timeout),
            ..Limits::default()
        }
    }

    pub fn deadline(&self) -> Option<Instant> {
        self.timeout.map(|t| Instant::now() + t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Optimal,
    InfeasibleWithinBound,
    Timeout,
}

/// One decision query of an optimisation loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Iteration {
    /// `delta` in sum-of-costs mode, `mu` in makespan mode.
    pub bound: usize,
    pub mu: usize,
    pub var_count: u32,
    pub clause_count: usize,
    pub solver_ms: f64,
    pub satisfiable: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOutcome {
    pub status: Status,
    pub solution: Option<Solution>,
    /// Sum-of-costs above the individual shortest paths, when solved.
    pub delta: Option<usize>,
    pub iterations: Vec<Iteration>,
    pub total_ms: f64,
}

impl SolveOutcome {
    pub(crate) fn finish(
        status: Status,
        solution: Option<Solution>,
        costs: Option<&PathCosts>,
        iterations: Vec<Iteration>,
        started: Instant,
    ) -> Self {
        debug_assert_eq!(status == Status::Optimal, solution.is_some());
        let delta = match (&solution, costs) {
            (Some(s), Some(c)) => Some(s.soc - c.xi0_sum as usize),
            _ => None,
        };
        SolveOutcome {
            status,
            solution,
            delta,
            iterations,
            total_ms: started.elapsed().as_secs_f64() * 1e3,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }

    pub fn soc(&self) -> Option<usize> {
        self.solution.as_ref().map(|s| s.soc)
    }

    pub fn makespan(&self) -> Option<usize> {
        self.solution.as_ref().map(|s| s.makespan)
    }

    /// Size of the largest formula the loop built.
    pub fn max_formula(&self) -> Option<(u32, usize)> {
        self.iterations
            .iter()
            .map(|it| (it.var_count, it.clause_count))
            .max()
    }
}

/// Per-agent TEGs of depth `mu` for a sum-of-costs query with slack `delta`.
pub fn soc_tegs(
    instance: &MapfInstance,
    costs: &PathCosts,
    encoding: Encoding,
    delta: usize,
) -> Result<Vec<Teg>, TegError> {
    let mu = costs.mu0 as usize + delta;
    instance
        .agents()
        .iter()
        .zip(&costs.xi0)
        .map(|(a, &xi0)| match encoding {
            Encoding::Basic => build_teg(instance.graph(), mu, xi0 as usize, a.start, a.goal),
            Encoding::Mdd => {
                build_mdd_teg(instance.graph(), mu, xi0 as usize, delta, a.start, a.goal)
            }
        })
        .collect()
}

/// Per-agent TEGs for a makespan query; all edges are standard.
pub fn makespan_tegs(
    instance: &MapfInstance,
    encoding: Encoding,
    mu: usize,
) -> Result<Vec<Teg>, TegError> {
    instance
        .agents()
        .iter()
        .map(|a| match encoding {
            Encoding::Basic => build_teg(instance.graph(), mu, mu, a.start, a.goal),
            Encoding::Mdd => build_mdd_teg(instance.graph(), mu, mu, 0, a.start, a.goal),
        })
        .collect()
}

/// Sum-of-costs formula at slack `delta`.
pub fn encode_soc_query(
    instance: &MapfInstance,
    costs: &PathCosts,
    encoding: Encoding,
    delta: usize,
) -> Result<Encoded, SolveError> {
    let tegs = soc_tegs(instance, costs, encoding, delta)?;
    Ok(encode_soc(instance, tegs, delta)?)
}

/// Callback invoked with every formula and the backend's verdict on it.
pub type Observer<'a> = dyn FnMut(&Encoded, &SatResult) + 'a;

/// SAT-based optimal solver configuration.
#[derive(Debug, Clone, Default)]
pub struct SatSolver {
    pub encoding: Encoding,
    pub backend: SatBackend,
    pub limits: Limits,
}

impl SatSolver {
    pub fn new(encoding: Encoding, backend: SatBackend, limits: Limits) -> Self {
        SatSolver {
            encoding,
            backend,
            limits,
        }
    }

    pub fn solve(&self, instance: &MapfInstance, objective: Objective) -> Result<SolveOutcome, SolveError> {
        match objective {
            Objective::Soc => self.solve_soc(instance, &mut |_, _| {}),
            Objective::Makespan => self.solve_makespan(instance, &mut |_, _| {}),
        }
    }

    pub fn solve_soc(
        &self,
        instance: &MapfInstance,
        observer: &mut Observer<'_>,
    ) -> Result<SolveOutcome, SolveError> {
        let started = Instant::now();
        let deadline = self.limits.deadline();
        let costs = match shortest_path_costs(instance) {
            Ok(c) => c,
            Err(InstanceError::Unreachable(_)) => {
                return Ok(SolveOutcome::finish(
                    Status::InfeasibleWithinBound,
                    None,
                    None,
                    Vec::new(),
                    started,
                ))
            }
            Err(e) => return Err(e.into()),
        };
        let mut iterations = Vec::new();
        for delta in 0..=self.limits.delta_cap {
            if deadline.is_some_and(|d| Instant::now() >= d) {
                return Ok(SolveOutcome::finish(Status::Timeout, None, Some(&costs), iterations, started));
            }
            let enc = encode_soc_query(instance, &costs, self.encoding, delta)?;
            let mu = costs.mu0 as usize + delta;
            let (result, it) = self.query(&enc, delta, mu, deadline)?;
            iterations.push(it);
            observer(&enc, &result);
            match result {
                SatResult::Sat(model) => {
                    let solution = decode_model(&enc.varmap, &model)?;
                    return Ok(SolveOutcome::finish(
                        Status::Optimal,
                        Some(solution),
                        Some(&costs),
                        iterations,
                        started,
                    ));
                }
                SatResult::Unsat => {}
                SatResult::Unknown => {
                    return Ok(SolveOutcome::finish(Status::Timeout, None, Some(&costs), iterations, started))
                }
            }
        }
        Ok(SolveOutcome::finish(
            Status::InfeasibleWithinBound,
            None,
            Some(&costs),
            iterations,
            started,
        ))
    }

    pub fn solve_makespan(
        &self,
        instance: &MapfInstance,
        observer: &mut Observer<'_>,
    ) -> Result<SolveOutcome, SolveError> {
        let started = Instant::now();
        let deadline = self.limits.deadline();
        let costs = match shortest_path_costs(instance) {
            Ok(c) => c,
            Err(InstanceError::Unreachable(_)) => {
                return Ok(SolveOutcome::finish(
                    Status::InfeasibleWithinBound,
                    None,
                    None,
                    Vec::new(),
                    started,
                ))
            }
            Err(e) => return Err(e.into()),
        };
        let mu0 = costs.mu0 as usize;
        let mut iterations = Vec::new();
        for mu in mu0..=mu0 + self.limits.delta_cap {
            if deadline.is_some_and(|d| Instant::now() >= d) {
                return Ok(SolveOutcome::finish(Status::Timeout, None, Some(&costs), iterations, started));
            }
            let enc = encode_makespan(instance, makespan_tegs(instance, self.encoding, mu)?)?;
            let (result, it) = self.query(&enc, mu, mu, deadline)?;
            iterations.push(it);
            observer(&enc, &result);
            match result {
                SatResult::Sat(model) => {
                    let solution = decode_model(&enc.varmap, &model)?;
                    return Ok(SolveOutcome::finish(
                        Status::Optimal,
                        Some(solution),
                        Some(&costs),
                        iterations,
                        started,
                    ));
                }
                SatResult::Unsat => {}
                SatResult::Unknown => {
                    return Ok(SolveOutcome::finish(Status::Timeout, None, Some(&costs), iterations, started))
                }
            }
        }
        Ok(SolveOutcome::finish(
            Status::InfeasibleWithinBound,
            None,
            Some(&costs),
            iterations,
            started,
        ))
    }

    fn query(
        &self,
        enc: &Encoded,
        bound: usize,
        mu: usize,
        deadline: Option<Instant>,
    ) -> Result<(SatResult, Iteration), SolveError> {
        let t0 = Instant::now();
        let result = sat_solve(&self.backend, &enc.formula, &[], deadline)?;
        let it = Iteration {
            bound,
            mu,
            var_count: enc.formula.var_count(),
            clause_count: enc.formula.clause_count(),
            solver_ms: t0.elapsed().as_secs_f64() * 1e3,
            satisfiable: match result {
                SatResult::Sat(_) => Some(true),
                SatResult::Unsat => Some(false),
                SatResult::Unknown => None,
            },
        };
        Ok((result, it))
    }
}

/// Sum-of-costs optimal plan by increasing the slack one step at a time.
pub fn solve_soc_optimal(
    instance: &MapfInstance,
    encoding: Encoding,
    backend: &SatBackend,
    limits: &Limits,
) -> Result<SolveOutcome, SolveError> {
    SatSolver::new(encoding, backend.clone(), *limits).solve_soc(instance, &mut |_, _| {})
}

/// Makespan optimal plan by increasing the makespan one step at a time.
pub fn solve_makespan_optimal(
    instance: &MapfInstance,
    backend: &SatBackend,
    limits: &Limits,
) -> Result<SolveOutcome, SolveError> {
    SatSolver::new(Encoding::Mdd, backend.clone(), *limits).solve_makespan(instance, &mut |_, _| {})
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{parse_map, validate_solution, Agent, Graph};

    fn fig5() -> MapfInstance {
        let g = Graph::new(3, [(0, 1), (1, 2)]).unwrap();
        MapfInstance::new(g, vec![Agent { start: 0, goal: 2 }]).unwrap()
    }

    fn square_crossing() -> MapfInstance {
        let g = parse_map("type octile\nheight 2\nwidth 2\nmap\n..\n..\n").unwrap();
        MapfInstance::new(g, vec![Agent { start: 0, goal: 3 }, Agent { start: 3, goal: 0 }]).unwrap()
    }

    #[test]
    fn single_agent_one_iteration() {
        for enc in [Encoding::Basic, Encoding::Mdd] {
            let out = solve_soc_optimal(&fig5(), enc, &SatBackend::Embedded, &Limits::default()).unwrap();
            assert_eq!(out.status, Status::Optimal);
            assert_eq!(out.soc(), Some(2));
            assert_eq!(out.delta, Some(0));
            assert_eq!(out.iterations.len(), 1);
        }
        let out = solve_makespan_optimal(&fig5(), &SatBackend::Embedded, &Limits::default()).unwrap();
        assert_eq!(out.makespan(), Some(2));
        assert_eq!(out.iterations.len(), 1);
    }

    #[test]
    fn square_crossing_needs_no_slack() {
        let inst = square_crossing();
        let out = solve_soc_optimal(&inst, Encoding::Mdd, &SatBackend::Embedded, &Limits::default()).unwrap();
        assert_eq!((out.soc(), out.delta), (Some(4), Some(0)));
        assert!(validate_solution(&inst, out.solution.as_ref().unwrap()).ok);
    }

    #[test]
    fn corridor_with_pocket_needs_slack() {
        // Row 0 is a corridor, (1, 1) a side pocket. Agents swap ends.
        let g = parse_map("type octile\nheight 2\nwidth 4\nmap\n....\n@.@@\n").unwrap();
        let grid = g.grid().unwrap().clone();
        let a = grid.vertex_at(0, 0).unwrap();
        let b = grid.vertex_at(0, 3).unwrap();
        let inst = MapfInstance::new(g, vec![Agent { start: a, goal: b }, Agent { start: b, goal: a }]).unwrap();
        for enc in [Encoding::Basic, Encoding::Mdd] {
            let out = solve_soc_optimal(&inst, enc, &SatBackend::Embedded, &Limits::default()).unwrap();
            assert!(out.delta.unwrap() > 0);
            assert_eq!(out.iterations.len(), out.delta.unwrap() + 1);
            assert!(validate_solution(&inst, out.solution.as_ref().unwrap()).ok);
        }
    }

    #[test]
    fn swap_hits_the_cap() {
        let g = Graph::new(2, [(0, 1)]).unwrap();
        let inst = MapfInstance::new(g, vec![Agent { start: 0, goal: 1 }, Agent { start: 1, goal: 0 }]).unwrap();
        let limits = Limits { timeout: None, delta_cap: 5 };
        let out = solve_makespan_optimal(&inst, &SatBackend::Embedded, &limits).unwrap();
        assert_eq!(out.status, Status::InfeasibleWithinBound);
        assert_eq!(out.iterations.len(), 6);
        let out = solve_soc_optimal(&inst, Encoding::Basic, &SatBackend::Embedded, &limits).unwrap();
        assert_eq!(out.status, Status::InfeasibleWithinBound);
        assert!(out.solution.is_none());
    }

    #[test]
    fn unreachable_goal_is_infeasible() {
        let g = Graph::new(3, [(0, 1)]).unwrap();
        let inst = MapfInstance::new(g, vec![Agent { start: 0, goal: 2 }]).unwrap();
        let out = solve_soc_optimal(&inst, Encoding::Mdd, &SatBackend::Embedded, &Limits::default()).unwrap();
        assert_eq!(out.status, Status::InfeasibleWithinBound);
        assert!(out.iterations.is_empty());
    }

    #[test]
    fn zero_timeout_reports_timeout() {
        let out = solve_soc_optimal(
            &square_crossing(),
            Encoding::Mdd,
            &SatBackend::Embedded,
            &Limits::with_timeout(Duration::ZERO),
        )
        .unwrap();
        assert_eq!(out.status, Status::Timeout);
        assert!(out.solution.is_none());
    }

    #[test]
    fn observer_sees_every_formula() {
        let mut seen = Vec::new();
        let solver = SatSolver::default();
        let out = solver
            .solve_soc(&square_crossing(), &mut |enc, res| seen.push((enc.formula.clause_count(), res.is_sat())))
            .unwrap();
        assert_eq!(seen.len(), out.iterations.len());
        assert!(seen.last().unwrap().1);
    }
}
