//! Experiment harness: random grid suites, per-instance result rows and
//! success-rate/runtime aggregates.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::idframe::{id_solve, CbsSolver, IdMode};
use crate::instance::{generate_grid_instance, validate_solution, GridGenConfig, InstanceError, MapfInstance};
use crate::sat::{ExternalSolver, SatBackend};
use crate::satloop::{Encoding, Limits, Objective, SatSolver, SolveError, SolveOutcome, Status};
use crate::search::cbs_solve;

pub const CSV_HEADER: &str =
    "instance_id,algorithm,objective,k,status,soc,makespan,delta,var_count,clause_count,wall_time_ms";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    BasicSat,
    MddSat,
    Cbs,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::BasicSat, Algorithm::MddSat, Algorithm::Cbs];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::BasicSat => "basic-sat",
            Algorithm::MddSat => "mdd-sat",
            Algorithm::Cbs => "cbs",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| format!("unknown algorithm {s:?}"))
    }
}

/// Independence detection wrapper choice.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IdChoice {
    #[default]
    Off,
    Sid,
    Id,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendChoice {
    #[default]
    Embedded,
    External,
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid suite config: {0}")]
    Config(String),
    #[error("suite config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("external backend selected but no solver command given")]
    MissingSolver,
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("{algorithm} returned an invalid plan for {instance}: {details}")]
    Validation {
        instance: String,
        algorithm: &'static str,
        details: String,
    },
}

/// Solves one instance with the chosen algorithm and wrapper.
pub fn run_algorithm(
    instance: &MapfInstance,
    algorithm: Algorithm,
    objective: Objective,
    id: IdChoice,
    backend: &SatBackend,
    limits: &Limits,
) -> Result<SolveOutcome, SolveError> {
    let sat = |encoding| SatSolver::new(encoding, backend.clone(), *limits);
    let mode = match id {
        IdChoice::Off => None,
        IdChoice::Sid => Some(IdMode::Sid),
        IdChoice::Id => Some(IdMode::Id),
    };
    match (algorithm, objective, mode) {
        (Algorithm::BasicSat, o, None) => sat(Encoding::Basic).solve(instance, o),
        (Algorithm::MddSat, o, None) => sat(Encoding::Mdd).solve(instance, o),
        (Algorithm::Cbs, Objective::Soc, None) => cbs_solve(instance, limits),
        (Algorithm::BasicSat, Objective::Soc, Some(m)) => id_solve(instance, &sat(Encoding::Basic), m, limits),
        (Algorithm::MddSat, Objective::Soc, Some(m)) => id_solve(instance, &sat(Encoding::Mdd), m, limits),
        (Algorithm::Cbs, Objective::Soc, Some(m)) => id_solve(instance, &CbsSolver, m, limits),
        (_, Objective::Makespan, _) => Err(SolveError::Unsupported(
            "makespan objective is only available for the SAT encodings without ID",
        )),
    }
}

/// A benchmark suite: every grid size × obstacle rate × agent count gets
/// `instances_per_point` random instances, each solved by every algorithm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    /// `[width, height]` pairs.
    pub grid_sizes: Vec<[usize; 2]>,
    pub obstacle_rates: Vec<f64>,
    pub agents_min: usize,
    pub agents_max: usize,
    pub instances_per_point: usize,
    pub timeout_secs: f64,
    pub delta_cap: usize,
    pub algorithms: Vec<Algorithm>,
    pub objective: Objective,
    pub id: IdChoice,
    pub backend: BackendChoice,
    pub solver_cmd: Option<String>,
    /// Base seed; each instance derives its own from its coordinates.
    pub seed: u64,
    /// Random-walk length used to place goals; 0 means `20 · width · height`.
    pub walk_steps: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            grid_sizes: vec![[8, 8]],
            obstacle_rates: vec![0.1],
            agents_min: 1,
            agents_max: 8,
            instances_per_point: 10,
            timeout_secs: 30.0,
            delta_cap: crate::satloop::DEFAULT_DELTA_CAP,
            algorithms: Algorithm::ALL.to_vec(),
            objective: Objective::Soc,
            id: IdChoice::Off,
            backend: BackendChoice::Embedded,
            solver_cmd: None,
            seed: 1,
            walk_steps: 0,
        }
    }
}

impl SuiteConfig {
    pub fn from_toml(text: &str) -> Result<Self, BenchError> {
        let cfg: SuiteConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: &str| Err(BenchError::Config(m.to_string()));
        if self.grid_sizes.is_empty() || self.grid_sizes.iter().any(|&[w, h]| w == 0 || h == 0) {
            return bad("grid sizes must be non-empty and positive");
        }
        if self.obstacle_rates.is_empty() || self.obstacle_rates.iter().any(|r| !(0.0..1.0).contains(r)) {
            return bad("obstacle rates must be in [0, 1)");
        }
        if self.agents_min == 0 || self.agents_max < self.agents_min {
            return bad("agent range must be positive and non-empty");
        }
        if self.instances_per_point == 0 {
            return bad("instances_per_point must be positive");
        }
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            return bad("timeout must be positive");
        }
        if self.algorithms.is_empty() {
            return bad("no algorithms selected");
        }
        if self.objective == Objective::Makespan
            && (self.algorithms.contains(&Algorithm::Cbs) || self.id != IdChoice::Off)
        {
            return bad("makespan objective supports only basic-sat and mdd-sat without ID");
        }
        Ok(())
    }

    fn backend(&self) -> Result<SatBackend, BenchError> {
        match self.backend {
            BackendChoice::Embedded => Ok(SatBackend::Embedded),
            BackendChoice::External => self
                .solver_cmd
                .as_deref()
                .and_then(ExternalSolver::from_command_line)
                .map(SatBackend::External)
                .or_else(SatBackend::external_from_env)
                .ok_or(BenchError::MissingSolver),
        }
    }

    /// Generator settings and id for every instance of the suite, in order.
    pub fn instances(&self) -> Vec<(String, GridGenConfig)> {
        let mut out = Vec::new();
        for &[w, h] in &self.grid_sizes {
            for &rate in &self.obstacle_rates {
                for k in self.agents_min..=self.agents_max {
                    for i in 0..self.instances_per_point {
                        let pct = (rate * 100.0).round() as u64;
                        let seed = mix(self.seed, &[w as u64, h as u64, pct, k as u64, i as u64]);
                        let id = format!("{w}x{h}-o{pct}-k{k}-i{i}");
                        let walk = if self.walk_steps == 0 { 20 * w * h } else { self.walk_steps };
                        out.push((
                            id,
                            GridGenConfig {
                                width: w,
                                height: h,
                                obstacle_rate: rate,
                                agents: k,
                                seed,
                                walk_steps: walk,
                            },
                        ));
                    }
                }
            }
        }
        out
    }
}

fn mix(seed: u64, parts: &[u64]) -> u64 {
    // splitmix64 folded over the coordinates
    let mut z = seed;
    for &p in parts {
        z = z.wrapping_add(p).wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^= z >> 31;
    }
    z
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub instance_id: String,
    pub algorithm: Algorithm,
    pub objective: Objective,
    pub k: usize,
    pub status: Status,
    pub soc: Option<usize>,
    pub makespan: Option<usize>,
    pub delta: Option<usize>,
    pub var_count: Option<u32>,
    pub clause_count: Option<usize>,
    pub wall_time_ms: f64,
}

impl ResultRow {
    pub fn solved(&self) -> bool {
        self.status == Status::Optimal
    }

    fn csv_line(&self) -> String {
        fn opt<T: ToString>(v: Option<T>) -> String {
            v.map(|v| v.to_string()).unwrap_or_default()
        }
        let status = match self.status {
            Status::Optimal => "optimal",
            Status::InfeasibleWithinBound => "infeasible-within-bound",
            Status::Timeout => "timeout",
        };
        let objective = match self.objective {
            Objective::Soc => "soc",
            Objective::Makespan => "makespan",
        };
        format!(
            "{},{},{},{},{},{},{},{},{},{},{:.3}",
            self.instance_id,
            self.algorithm.name(),
            objective,
            self.k,
            status,
            opt(self.soc),
            opt(self.makespan),
            opt(self.delta),
            opt(self.var_count),
            opt(self.clause_count),
            self.wall_time_ms
        )
    }
}

pub fn rows_to_csv(rows: &[ResultRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_line());
        out.push('\n');
    }
    out
}

/// Aggregate for one algorithm at one agent count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub algorithm: Algorithm,
    pub k: usize,
    pub instances: usize,
    pub solved: usize,
    pub success_rate: f64,
    /// Instances at this `k` solved by every algorithm of the suite.
    pub common_solved: usize,
    /// Mean runtime over the commonly solved instances; `None` when there
    /// are none.
    pub mean_common_ms: Option<f64>,
}

pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut algorithms: Vec<Algorithm> = rows.iter().map(|r| r.algorithm).collect();
    algorithms.sort_unstable();
    algorithms.dedup();
    let mut by_instance: BTreeMap<&str, Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        by_instance.entry(&r.instance_id).or_default().push(r);
    }
    let solved_by_all = |id: &str| {
        let rs = &by_instance[id];
        algorithms.iter().all(|a| rs.iter().any(|r| r.algorithm == *a && r.solved()))
    };
    let mut ks: Vec<usize> = rows.iter().map(|r| r.k).collect();
    ks.sort_unstable();
    ks.dedup();
    let mut out = Vec::new();
    for &algorithm in &algorithms {
        for &k in &ks {
            let mine: Vec<&ResultRow> = rows.iter().filter(|r| r.algorithm == algorithm && r.k == k).collect();
            if mine.is_empty() {
                continue;
            }
            let solved = mine.iter().filter(|r| r.solved()).count();
            let common: Vec<f64> = mine
                .iter()
                .filter(|r| solved_by_all(&r.instance_id))
                .map(|r| r.wall_time_ms)
                .collect();
            out.push(SummaryRow {
                algorithm,
                k,
                instances: mine.len(),
                solved,
                success_rate: solved as f64 / mine.len() as f64,
                common_solved: common.len(),
                mean_common_ms: (!common.is_empty()).then(|| common.iter().sum::<f64>() / common.len() as f64),
            });
        }
    }
    out
}

pub fn summary_to_csv(summary: &[SummaryRow]) -> String {
    let mut out = String::from("algorithm,k,instances,solved,success_rate,common_solved,mean_common_ms\n");
    for s in summary {
        let mean = s.mean_common_ms.map(|m| format!("{m:.3}")).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{:.3},{},{}",
            s.algorithm.name(),
            s.k,
            s.instances,
            s.solved,
            s.success_rate,
            s.common_solved,
            mean
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub rows: Vec<ResultRow>,
    pub summary: Vec<SummaryRow>,
}

impl SuiteReport {
    pub fn csv(&self) -> String {
        rows_to_csv(&self.rows)
    }

    pub fn summary_csv(&self) -> String {
        summary_to_csv(&self.summary)
    }
}

pub fn run_suite(config: &SuiteConfig) -> Result<SuiteReport, BenchError> {
    run_suite_with(config, &mut |_, _, _| {})
}

/// Runs the suite, handing every row, its instance and the full outcome to
/// `progress` as it completes. Any optimal plan that fails validation aborts the run.
pub fn run_suite_with(
    config: &SuiteConfig,
    progress: &mut dyn FnMut(&ResultRow, &MapfInstance, &SolveOutcome),
) -> Result<SuiteReport, BenchError> {
    config.validate()?;
    let backend = config.backend()?;
    let limits = Limits {
        timeout: Some(Duration::from_secs_f64(config.timeout_secs)),
        delta_cap: config.delta_cap,
    };
    let mut rows = Vec::new();
    for (id, gen) in config.instances() {
        let instance = generate_grid_instance(&gen)?;
        for &algorithm in &config.algorithms {
            let out = run_algorithm(&instance, algorithm, config.objective, config.id, &backend, &limits)?;
            if let Some(sol) = &out.solution {
                let report = validate_solution(&instance, sol);
                if !report.ok {
                    return Err(BenchError::Validation {
                        instance: id,
                        algorithm: algorithm.name(),
                        details: format!("{:?}", report.violations),
                    });
                }
            }
            let formula = out.max_formula();
            let row = ResultRow {
                instance_id: id.clone(),
                algorithm,
                objective: config.objective,
                k: gen.agents,
                status: out.status,
                soc: out.soc(),
                makespan: out.makespan(),
                delta: out.delta,
                var_count: formula.map(|f| f.0),
                clause_count: formula.map(|f| f.1),
                wall_time_ms: out.total_ms,
            };
            progress(&row, &instance, &out);
            rows.push(row);
        }
    }
    let summary = summarize(&rows);
    Ok(SuiteReport { rows, summary })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> SuiteConfig {
        SuiteConfig {
            grid_sizes: vec![[3, 3]],
            obstacle_rates: vec![0.0],
            agents_min: 1,
            agents_max: 1,
            instances_per_point: 2,
            timeout_secs: 10.0,
            ..SuiteConfig::default()
        }
    }

    #[test]
    fn tiny_suite_agrees_across_algorithms() {
        let report = run_suite(&tiny()).unwrap();
        assert_eq!(report.rows.len(), 6);
        for s in &report.summary {
            assert_eq!(s.success_rate, 1.0);
            assert_eq!(s.common_solved, 2);
        }
        for id in ["3x3-o0-k1-i0", "3x3-o0-k1-i1"] {
            let socs: Vec<_> = report.rows.iter().filter(|r| r.instance_id == id).map(|r| r.soc).collect();
            assert!(socs.windows(2).all(|w| w[0] == w[1]), "{socs:?}");
        }
        let csv = report.csv();
        assert!(csv.starts_with(CSV_HEADER));
        assert_eq!(csv.lines().count(), 7);
    }

    #[test]
    fn suite_is_deterministic_apart_from_timing() {
        let strip = |r: &SuiteReport| {
            r.rows
                .iter()
                .map(|r| ResultRow { wall_time_ms: 0.0, ..r.clone() })
                .collect::<Vec<_>>()
        };
        let a = run_suite(&tiny()).unwrap();
        let b = run_suite(&tiny()).unwrap();
        assert_eq!(strip(&a), strip(&b));
    }

    #[test]
    fn config_round_trip_and_validation() {
        let cfg = SuiteConfig::from_toml(
            "grid_sizes = [[4, 4]]\nobstacle_rates = [0.1]\nagents_min = 1\nagents_max = 2\n\
             instances_per_point = 3\ntimeout_secs = 5.0\nalgorithms = [\"mdd-sat\", \"cbs\"]\n",
        )
        .unwrap();
        assert_eq!(cfg.algorithms, vec![Algorithm::MddSat, Algorithm::Cbs]);
        assert_eq!(cfg.instances().len(), 6);
        assert!(SuiteConfig::from_toml("timeout_secs = 0.0").is_err());
        assert!(SuiteConfig::from_toml("agents_min = 3\nagents_max = 2").is_err());
        assert!(SuiteConfig::from_toml("bogus = 1").is_err());
        let cfg = SuiteConfig {
            objective: Objective::Makespan,
            ..SuiteConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn empty_common_set_gives_no_mean() {
        let row = |alg, status| ResultRow {
            instance_id: "a".into(),
            algorithm: alg,
            objective: Objective::Soc,
            k: 2,
            status,
            soc: None,
            makespan: None,
            delta: None,
            var_count: None,
            clause_count: None,
            wall_time_ms: 1.0,
        };
        let s = summarize(&[row(Algorithm::MddSat, Status::Optimal), row(Algorithm::Cbs, Status::Timeout)]);
        assert_eq!(s.len(), 2);
        assert!(s.iter().all(|s| s.mean_common_ms.is_none()));
        assert!(summary_to_csv(&s).lines().nth(1).unwrap().ends_with(','));
    }

    #[test]
    fn tiny_timeout_reports_timeout() {
        let cfg = SuiteConfig {
            grid_sizes: vec![[8, 8]],
            agents_min: 8,
            agents_max: 8,
            instances_per_point: 1,
            timeout_secs: 1e-6,
            algorithms: vec![Algorithm::MddSat],
            ..SuiteConfig::default()
        };
        let report = run_suite(&cfg).unwrap();
        assert_eq!(report.rows[0].status, Status::Timeout);
        assert_eq!(report.rows[0].soc, None);
    }

    #[test]
    fn external_without_command_is_an_error() {
        if std::env::var(crate::sat::SOLVER_ENV).is_ok() {
            return;
        }
        let cfg = SuiteConfig {
            backend: BackendChoice::External,
            ..tiny()
        };
        assert!(matches!(run_suite(&cfg), Err(BenchError::MissingSolver)));
    }
}
