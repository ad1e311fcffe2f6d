use std::io::Read;
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use web_time::Instant;

use super::{SatError, SatResult};
use crate::cnf::{CnfFormula, Lit};

static FILE_COUNTER: AtomicU64 = AtomicU64::new(0);

/// A solver run as `program args... <dimacs-path>` that reports its verdict
/// with SAT-competition `s` and `v` lines.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExternalSolver {
    pub program: String,
    pub args: Vec<String>,
}

impl ExternalSolver {
    /// Splits a whitespace-separated command line.
    pub fn from_command_line(cmd: &str) -> Option<Self> {
        let mut parts = cmd.split_whitespace().map(str::to_string);
        let program = parts.next()?;
        Some(ExternalSolver {
            program,
            args: parts.collect(),
        })
    }

    pub fn command_line(&self) -> String {
        std::iter::once(self.program.as_str())
            .chain(self.args.iter().map(String::as_str))
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub(super) fn solve(
        &self,
        formula: &CnfFormula,
        assumptions: &[Lit],
        timeout: Option<Duration>,
    ) -> Result<SatResult, SatError> {
        let mut formula = formula.clone();
        for &a in assumptions {
            while formula.var_count() < a.var() {
                formula.new_var();
            }
            formula.add_clause([a]);
        }
        let path = temp_path();
        std::fs::write(&path, formula.write_dimacs())?;
        let result = self.run(&path, timeout);
        let _ = std::fs::remove_file(&path);
        let (stdout, exit) = match result? {
            Some(out) => out,
            None => return Ok(SatResult::Unknown),
        };
        let verdict = parse_output(&stdout, formula.var_count(), exit)?;
        if let SatResult::Sat(model) = &verdict {
            if !formula.is_satisfied_by(model) {
                return Err(SatError::BadModel);
            }
        }
        Ok(verdict)
    }

    fn run(
        &self,
        path: &PathBuf,
        timeout: Option<Duration>,
    ) -> Result<Option<(String, Option<i32>)>, SatError> {
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .arg(path)
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|source| SatError::Spawn {
                command: self.command_line(),
                source,
            })?;
        let mut stdout = child.stdout.take().expect("piped stdout");
        let reader = std::thread::spawn(move || {
            let mut buf = String::new();
            stdout.read_to_string(&mut buf).map(|_| buf)
        });
        let deadline = timeout.map(|t| Instant::now() + t);
        let status = loop {
            if let Some(status) = child.try_wait()? {
                break status;
            }
            if deadline.is_some_and(|d| Instant::now() >= d) {
                let _ = child.kill();
                let _ = child.wait();
                let _ = reader.join();
                return Ok(None);
            }
            std::thread::sleep(Duration::from_millis(2));
        };
        let out = reader
            .join()
            .map_err(|_| SatError::Output("reader thread panicked".into()))??;
        Ok(Some((out, status.code())))
    }
}

fn temp_path() -> PathBuf {
    let n = FILE_COUNTER.fetch_add(1, Ordering::Relaxed);
    std::env::temp_dir().join(format!("mapfsat-{}-{n}.cnf", std::process::id()))
}

fn parse_output(out: &str, var_count: u32, exit: Option<i32>) -> Result<SatResult, SatError> {
    let mut status = None;
    let mut model = vec![false; var_count as usize + 1];
    for line in out.lines() {
        let line = line.trim();
        if let Some(rest) = line.strip_prefix("s ") {
            status = Some(rest.trim().to_string());
        } else if let Some(rest) = line.strip_prefix("v ") {
            for tok in rest.split_whitespace() {
                let value: i64 = tok
                    .parse()
                    .map_err(|_| SatError::Output(format!("bad model literal {tok:?}")))?;
                if value == 0 {
                    continue;
                }
                let var = value.unsigned_abs() as usize;
                if var > var_count as usize {
                    return Err(SatError::Output(format!("model variable {var} out of range")));
                }
                model[var] = value > 0;
            }
        }
    }
    match (status.as_deref(), exit) {
        (Some("SATISFIABLE"), _) => Ok(SatResult::Sat(model)),
        (Some("UNSATISFIABLE"), _) => Ok(SatResult::Unsat),
        (Some("UNKNOWN") | Some("INDETERMINATE"), _) => Ok(SatResult::Unknown),
        (None, Some(20)) => Ok(SatResult::Unsat),
        (Some(other), _) => Err(SatError::Output(format!("unexpected status {other:?}"))),
        (None, _) => Err(SatError::Output("no `s` status line".into())),
    }
}
