//! SAT backend contract: the embedded CDCL solver or an external DIMACS solver.

pub mod cdcl;
mod external;

use std::time::Duration;

use thiserror::Error;
use web_time::Instant;

use crate::cnf::{CnfFormula, Lit};

pub use external::ExternalSolver;

/// Environment variable consulted for the external solver command line.
pub const SOLVER_ENV: &str = "MAPFSAT_SOLVER";

#[derive(Debug, Error)]
pub enum SatError {
    #[error("failed to run external solver `{command}`: {source}")]
    Spawn {
        command: String,
        source: std::io::Error,
    },
    #[error("external solver i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("external solver output: {0}")]
    Output(String),
    #[error("external solver model violates the formula")]
    BadModel,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SatResult {
    /// `model[v]` is the value of variable `v`; index 0 is unused.
    Sat(Vec<bool>),
    Unsat,
    /// No verdict before the deadline.
    Unknown,
}

impl SatResult {
    pub fn is_sat(&self) -> bool {
        matches!(self, SatResult::Sat(_))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub enum SatBackend {
    #[default]
    Embedded,
    External(ExternalSolver),
}

impl SatBackend {
    /// External backend from the environment, if configured.
    pub fn external_from_env() -> Option<SatBackend> {
        let cmd = std::env::var(SOLVER_ENV).ok()?;
        ExternalSolver::from_command_line(&cmd).map(SatBackend::External)
    }

    pub fn name(&self) -> &'static str {
        match self {
            SatBackend::Embedded => "embedded",
            SatBackend::External(_) => "external",
        }
    }
}

/// Decides `formula` under `assumptions` with the selected backend.
pub fn sat_solve(
    backend: &SatBackend,
    formula: &CnfFormula,
    assumptions: &[Lit],
    deadline: Option<Instant>,
) -> Result<SatResult, SatError> {
    match backend {
        SatBackend::Embedded => {
            let mut solver = cdcl::Solver::from_formula(formula);
            Ok(match solver.solve(assumptions, deadline) {
                cdcl::Answer::Sat(mut model) => {
                    model.resize(formula.var_count() as usize + 1, false);
                    debug_assert!(formula.is_satisfied_by(&model));
                    SatResult::Sat(model)
                }
                cdcl::Answer::Unsat => SatResult::Unsat,
                cdcl::Answer::Interrupted => SatResult::Unknown,
            })
        }
        SatBackend::External(ext) => {
            let timeout = deadline.map(|d| d.saturating_duration_since(Instant::now()));
            if timeout == Some(Duration::ZERO) {
                return Ok(SatResult::Unknown);
            }
            ext.solve(formula, assumptions, timeout)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embedded_backend_basics() {
        let mut f = CnfFormula::new();
        let a = f.new_var();
        let b = f.new_var();
        f.add_clause([Lit::pos(a), Lit::pos(b)]);
        f.add_clause([Lit::neg(a)]);
        let r = sat_solve(&SatBackend::Embedded, &f, &[], None).unwrap();
        assert_eq!(r, SatResult::Sat(vec![false, false, true]));
        let r = sat_solve(&SatBackend::Embedded, &f, &[Lit::neg(b)], None).unwrap();
        assert_eq!(r, SatResult::Unsat);
    }

    #[test]
    fn model_covers_unused_variables() {
        let mut f = CnfFormula::new();
        f.new_var();
        f.new_var();
        let r = sat_solve(&SatBackend::Embedded, &f, &[], None).unwrap();
        assert_eq!(r, SatResult::Sat(vec![false; 3]));
    }
}
