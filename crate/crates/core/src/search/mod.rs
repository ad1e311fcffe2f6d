//! Search-based baselines: conflict-based search and a brute-force oracle.

mod cbs;

pub(crate) use cbs::cbs_core;
pub mod oracle;

pub use cbs::{
    cbs_solve, cbs_solve_with_stats, first_conflict, low_level_astar, CbsStats, Conflict, Constraint,
};
pub use oracle::{oracle_makespan, oracle_solve, oracle_solve_with, OracleConfig, OracleError, OracleSolution};
