use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use mapfsat::bench::{run_algorithm, run_suite_with, Algorithm, IdChoice, SuiteConfig};
use mapfsat::encoder::Encoded;
use mapfsat::instance::{
    generate_grid_instance, parse_instance, parse_map, validate_solution, write_instance, write_map, GridGenConfig,
    MapfInstance, Solution,
};
use mapfsat::sat::{ExternalSolver, SatBackend, SOLVER_ENV};
use mapfsat::satloop::{Encoding, Limits, Objective, SatSolver, SolveOutcome, Status, DEFAULT_DELTA_CAP};

const EXIT_NO_SOLUTION: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_INTERNAL: u8 = 3;

#[derive(Parser)]
#[command(name = "mapf", version, about = "Optimal multi-agent path finding via SAT")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve an instance optimally.
    Solve(SolveArgs),
    /// Generate a random grid map and a solvable instance on it.
    Gen(GenArgs),
    /// Run a benchmark suite described by a TOML file.
    Bench(BenchArgs),
    /// Check a solution file against an instance.
    Validate(ValidateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgoArg {
    BasicSat,
    MddSat,
    Cbs,
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Soc,
    Makespan,
}

#[derive(Clone, Copy, ValueEnum)]
enum IdArg {
    Off,
    Sid,
    Id,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Embedded,
    External,
}

#[derive(clap::Args)]
struct SolveArgs {
    /// Grid map file; not needed for graph-form instances.
    #[arg(long)]
    map: Option<PathBuf>,
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, value_enum, default_value = "mdd-sat")]
    algo: AlgoArg,
    #[arg(long, value_enum, default_value = "soc")]
    objective: ObjectiveArg,
    #[arg(long, value_enum, default_value = "off")]
    id: IdArg,
    #[arg(long, value_enum, default_value = "embedded")]
    backend: BackendArg,
    /// External solver command; the DIMACS path is appended.
    #[arg(long, env = SOLVER_ENV)]
    solver_cmd: Option<String>,
    /// Time limit in seconds.
    #[arg(long)]
    timeout: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_DELTA_CAP)]
    delta_cap: usize,
    /// Write the last formula built to this DIMACS file (and a `.vars` sidecar).
    #[arg(long)]
    emit_dimacs: Option<PathBuf>,
    /// Write the solution as JSON to this file.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Print the full outcome as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(clap::Args)]
struct GenArgs {
    #[arg(long)]
    width: usize,
    #[arg(long)]
    height: usize,
    #[arg(long, default_value_t = 0.1)]
    obstacle_rate: f64,
    #[arg(long)]
    agents: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Random-walk steps used to place goals; defaults to 20 · width · height.
    #[arg(long)]
    walk_steps: Option<usize>,
    #[arg(long)]
    map_out: PathBuf,
    #[arg(long)]
    instance_out: PathBuf,
}

#[derive(clap::Args)]
struct BenchArgs {
    /// Suite config (TOML).
    config: PathBuf,
    /// Per-instance CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Aggregate CSV; stderr when omitted.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(clap::Args)]
struct ValidateArgs {
    #[arg(long)]
    map: Option<PathBuf>,
    #[arg(long)]
    instance: PathBuf,
    /// Solution JSON, as written by `solve --output` or `solve --json`.
    #[arg(long)]
    solution: PathBuf,
}

/// Error carrying the exit status it maps to.
struct Failure {
    code: u8,
    msg: String,
}

fn usage(msg: impl std::fmt::Display) -> Failure {
    Failure {
        code: EXIT_USAGE,
        msg: msg.to_string(),
    }
}

fn internal(msg: impl std::fmt::Display) -> Failure {
    Failure {
        code: EXIT_INTERNAL,
        msg: msg.to_string(),
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| internal(format!("{}: {e}", path.display())))
}

fn load_instance(map: Option<&Path>, instance: &Path) -> Result<MapfInstance, Failure> {
    let graph = match map {
        Some(p) => Some(Arc::new(parse_map(&read(p)?).map_err(|e| usage(format!("{}: {e}", p.display())))?)),
        None => None,
    };
    parse_instance(&read(instance)?, graph).map_err(|e| usage(format!("{}: {e}", instance.display())))
}

fn backend(kind: BackendArg, cmd: Option<&str>) -> Result<SatBackend, Failure> {
    match kind {
        BackendArg::Embedded => Ok(SatBackend::Embedded),
        BackendArg::External => cmd
            .and_then(ExternalSolver::from_command_line)
            .map(SatBackend::External)
            .ok_or_else(|| usage(format!("--backend external needs --solver-cmd or {SOLVER_ENV}"))),
    }
}

fn status_name(s: Status) -> &'static str {
    match s {
        Status::Optimal => "optimal",
        Status::InfeasibleWithinBound => "infeasible-within-bound",
        Status::Timeout => "timeout",
    }
}

fn solve(args: SolveArgs) -> Result<u8, Failure> {
    let instance = load_instance(args.map.as_deref(), &args.instance)?;
    let backend = backend(args.backend, args.solver_cmd.as_deref())?;
    let timeout = match args.timeout {
        Some(t) if t > 0.0 && t.is_finite() => Some(Duration::from_secs_f64(t)),
        Some(_) => return Err(usage("--timeout must be positive")),
        None => None,
    };
    let limits = Limits {
        timeout,
        delta_cap: args.delta_cap,
    };
    let objective = match args.objective {
        ObjectiveArg::Soc => Objective::Soc,
        ObjectiveArg::Makespan => Objective::Makespan,
    };
    let algorithm = match args.algo {
        AlgoArg::BasicSat => Algorithm::BasicSat,
        AlgoArg::MddSat => Algorithm::MddSat,
        AlgoArg::Cbs => Algorithm::Cbs,
    };
    let id = match args.id {
        IdArg::Off => IdChoice::Off,
        IdArg::Sid => IdChoice::Sid,
        IdArg::Id => IdChoice::Id,
    };
    if objective == Objective::Makespan && (algorithm == Algorithm::Cbs || id != IdChoice::Off) {
        return Err(usage("--objective makespan needs a SAT algorithm and --id off"));
    }

    let outcome: SolveOutcome = if let Some(path) = &args.emit_dimacs {
        let encoding = match algorithm {
            Algorithm::BasicSat => Encoding::Basic,
            Algorithm::MddSat => Encoding::Mdd,
            Algorithm::Cbs => return Err(usage("--emit-dimacs needs a SAT algorithm")),
        };
        if id != IdChoice::Off {
            return Err(usage("--emit-dimacs cannot be combined with --id"));
        }
        let solver = SatSolver::new(encoding, backend, limits);
        let mut last: Option<Encoded> = None;
        let mut keep = |enc: &Encoded, _: &_| last = Some(enc.clone());
        let out = match objective {
            Objective::Soc => solver.solve_soc(&instance, &mut keep),
            Objective::Makespan => solver.solve_makespan(&instance, &mut keep),
        }
        .map_err(internal)?;
        if let Some(enc) = last {
            write(path, &enc.formula.write_dimacs())?;
            let mut sidecar = path.clone().into_os_string();
            sidecar.push(".vars");
            write(Path::new(&sidecar), &enc.varmap.sidecar())?;
        }
        out
    } else {
        run_algorithm(&instance, algorithm, objective, id, &backend, &limits).map_err(internal)?
    };

    if let Some(sol) = &outcome.solution {
        let report = validate_solution(&instance, sol);
        if !report.ok {
            return Err(internal(format!("solver produced an invalid plan: {:?}", report.violations)));
        }
        if let Some(path) = &args.output {
            write(path, &serde_json::to_string_pretty(sol).map_err(internal)?)?;
        }
    }

    if args.json {
        println!("{}", serde_json::to_string_pretty(&outcome).map_err(internal)?);
    } else {
        print!("status={}", status_name(outcome.status));
        if let Some(sol) = &outcome.solution {
            print!(" soc={} makespan={}", sol.soc, sol.makespan);
        }
        if let Some(d) = outcome.delta {
            print!(" delta={d}");
        }
        if let Some((vars, clauses)) = outcome.max_formula() {
            print!(" vars={vars} clauses={clauses}");
        }
        println!(" time_ms={:.1}", outcome.total_ms);
        if let Some(sol) = &outcome.solution {
            for (i, p) in sol.paths.iter().enumerate() {
                let steps: Vec<String> = p.iter().map(|&v| describe(&instance, v)).collect();
                println!("agent {i}: {}", steps.join(" "));
            }
        }
    }
    Ok(if outcome.is_optimal() { 0 } else { EXIT_NO_SOLUTION })
}

fn describe(instance: &MapfInstance, v: usize) -> String {
    match instance.graph().grid() {
        Some(g) => {
            let (r, c) = g.coords(v);
            format!("({r},{c})")
        }
        None => v.to_string(),
    }
}

fn gen(args: GenArgs) -> Result<u8, Failure> {
    let cfg = GridGenConfig {
        width: args.width,
        height: args.height,
        obstacle_rate: args.obstacle_rate,
        agents: args.agents,
        seed: args.seed,
        walk_steps: args.walk_steps.unwrap_or(20 * args.width * args.height),
    };
    let instance = generate_grid_instance(&cfg).map_err(usage)?;
    let grid = instance.graph().grid().expect("generated instances are grids");
    write(&args.map_out, &write_map(grid))?;
    write(&args.instance_out, &write_instance(&instance))?;
    eprintln!(
        "wrote {} free cells and {} agents",
        instance.graph().vertex_count(),
        instance.agent_count()
    );
    Ok(0)
}

fn bench(args: BenchArgs) -> Result<u8, Failure> {
    let cfg = SuiteConfig::from_toml(&read(&args.config)?).map_err(usage)?;
    let report = run_suite_with(&cfg, &mut |row, _, _| {
        eprintln!(
            "{} {} {} {:.1}ms",
            row.instance_id,
            row.algorithm.name(),
            status_name(row.status),
            row.wall_time_ms
        );
    })
    .map_err(internal)?;
    match &args.out {
        Some(p) => write(p, &report.csv())?,
        None => print!("{}", report.csv()),
    }
    match &args.summary {
        Some(p) => write(p, &report.summary_csv())?,
        None => eprint!("{}", report.summary_csv()),
    }
    Ok(0)
}

fn validate(args: ValidateArgs) -> Result<u8, Failure> {
    let instance = load_instance(args.map.as_deref(), &args.instance)?;
    let text = read(&args.solution)?;
    #[derive(serde::Deserialize)]
    struct Wrapped {
        solution: Option<Solution>,
    }
    let solution = match serde_json::from_str::<Solution>(&text) {
        Ok(s) => s,
        Err(e) => serde_json::from_str::<Wrapped>(&text)
            .ok()
            .and_then(|w| w.solution)
            .ok_or_else(|| usage(format!("{}: {e}", args.solution.display())))?,
    };
    let report = validate_solution(&instance, &solution);
    if report.ok {
        println!("valid soc={} makespan={}", solution.soc, solution.makespan);
        Ok(0)
    } else {
        println!("invalid: {} violation(s)", report.violations.len());
        for v in &report.violations {
            println!("  {v}");
        }
        Ok(EXIT_NO_SOLUTION)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Cmd::Solve(a) => solve(a),
        Cmd::Gen(a) => gen(a),
        Cmd::Bench(a) => bench(a),
        Cmd::Validate(a) => validate(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
