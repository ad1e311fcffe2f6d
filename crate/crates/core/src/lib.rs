//! Optimal multi-agent path finding by compilation to SAT.
//!
//! Instances are compiled into a sequence of CNF formulas over per-agent
//! time expansion graphs; the first satisfiable formula yields a
//! sum-of-costs (or makespan) optimal plan. Conflict-based search and a
//! brute-force joint-state search serve as baselines and ground truth, and
//! independence detection splits instances into independently solvable
//! groups.

pub mod bench;
pub mod cnf;
pub mod encoder;
pub mod idframe;
pub mod instance;
pub mod sat;
pub mod satloop;
pub mod search;
pub mod teg;

pub use instance::{Agent, Graph, MapfInstance, Solution, VertexId};
pub use satloop::{Encoding, Limits, SolveOutcome, Status};
