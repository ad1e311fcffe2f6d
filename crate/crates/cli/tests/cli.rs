use std::path::Path;
use std::process::{Command, Output};

use mapfsat::cnf::CnfFormula;
use mapfsat::sat::{sat_solve, SatBackend};

const FIG5: &str = "vertices 3\nedge 0 1\nedge 1 2\nagent 0 2\n";
const SWAP: &str = "vertices 2\nedge 0 1\nagent 0 1\nagent 1 0\n";
const SQUARE_MAP: &str = "type octile\nheight 2\nwidth 2\nmap\n..\n..\n";
const SQUARE_CROSSING: &str = "agents 2\n0 0 1 1\n1 1 0 0\n";

fn mapf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mapf"))
        .args(args)
        .env_remove("MAPFSAT_SOLVER")
        .output()
        .expect("run mapf")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn solves_single_agent_path() {
    let dir = tempfile::tempdir().unwrap();
    let inst = write(dir.path(), "fig5.inst", FIG5);
    for algo in ["basic-sat", "mdd-sat", "cbs"] {
        let o = mapf(&["solve", "--instance", &inst, "--algo", algo, "--objective", "soc"]);
        assert_eq!(o.status.code(), Some(0), "{algo}");
        assert!(stdout(&o).contains("soc=2"), "{}", stdout(&o));
    }
}

#[test]
fn grid_instance_with_id_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let map = write(dir.path(), "sq.map", SQUARE_MAP);
    let inst = write(dir.path(), "sq.inst", SQUARE_CROSSING);
    for id in ["off", "sid", "id"] {
        let o = mapf(&["solve", "--map", &map, "--instance", &inst, "--id", id, "--json"]);
        assert_eq!(o.status.code(), Some(0));
        let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
        assert_eq!(v["status"], "optimal");
        assert_eq!(v["solution"]["soc"], 4);
    }
    let o = mapf(&["solve", "--map", &map, "--instance", &inst, "--objective", "makespan"]);
    assert!(stdout(&o).contains("makespan=2"), "{}", stdout(&o));
}

#[test]
fn unsolvable_within_cap_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let inst = write(dir.path(), "swap.inst", SWAP);
    let o = mapf(&["solve", "--instance", &inst, "--delta-cap", "3"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("status=infeasible-within-bound"));
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let inst = write(dir.path(), "fig5.inst", FIG5);
    assert_eq!(mapf(&["solve"]).status.code(), Some(2));
    assert_eq!(mapf(&["solve", "--instance", &inst, "--algo", "astar"]).status.code(), Some(2));
    let o = mapf(&["solve", "--instance", &inst, "--backend", "external"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("solver-cmd"));
    let o = mapf(&["solve", "--instance", &dir.path().join("missing").to_string_lossy()]);
    assert_eq!(o.status.code(), Some(2));
    let o = mapf(&["solve", "--instance", &inst, "--algo", "cbs", "--objective", "makespan"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn validate_flags_tampered_solution() {
    let dir = tempfile::tempdir().unwrap();
    let map = write(dir.path(), "sq.map", SQUARE_MAP);
    let inst = write(dir.path(), "sq.inst", SQUARE_CROSSING);
    let sol = dir.path().join("sol.json").to_string_lossy().into_owned();
    let o = mapf(&["solve", "--map", &map, "--instance", &inst, "--output", &sol]);
    assert_eq!(o.status.code(), Some(0));
    let o = mapf(&["validate", "--map", &map, "--instance", &inst, "--solution", &sol]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("valid soc=4"));

    // Both agents jump straight across the diagonal.
    let bad = write(dir.path(), "bad.json", r#"{"paths": [[0, 3], [3, 0]]}"#);
    let o = mapf(&["validate", "--map", &map, "--instance", &inst, "--solution", &bad]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("invalid-move"), "{}", stdout(&o));
}

#[test]
fn emitted_dimacs_parses_and_matches() {
    let dir = tempfile::tempdir().unwrap();
    let map = write(dir.path(), "sq.map", SQUARE_MAP);
    let inst = write(dir.path(), "sq.inst", SQUARE_CROSSING);
    let cnf = dir.path().join("out.cnf");
    let o = mapf(&["solve", "--map", &map, "--instance", &inst, "--emit-dimacs", &cnf.to_string_lossy()]);
    assert_eq!(o.status.code(), Some(0));
    let f = CnfFormula::parse_dimacs(&std::fs::read_to_string(&cnf).unwrap()).unwrap();
    assert!(sat_solve(&SatBackend::Embedded, &f, &[], None).unwrap().is_sat());
    let sidecar = std::fs::read_to_string(dir.path().join("out.cnf.vars")).unwrap();
    assert!(sidecar.lines().all(|l| l.starts_with("x ")));

    let script = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scripts/pysat_solver.py");
    let has_pysat = Command::new("python3")
        .args(["-c", "import pysat"])
        .output()
        .is_ok_and(|o| o.status.success());
    if has_pysat {
        let o = Command::new("python3").arg(&script).arg(&cnf).output().unwrap();
        assert!(stdout(&o).lines().any(|l| l == "s SATISFIABLE"));
        let cmd = format!("python3 {}", script.display());
        let o = mapf(&["solve", "--map", &map, "--instance", &inst, "--backend", "external", "--solver-cmd", &cmd]);
        assert_eq!(o.status.code(), Some(0));
        assert!(stdout(&o).contains("soc=4"));
    }
}

#[test]
fn gen_then_solve() {
    let dir = tempfile::tempdir().unwrap();
    let map = dir.path().join("g.map").to_string_lossy().into_owned();
    let inst = dir.path().join("g.inst").to_string_lossy().into_owned();
    let o = mapf(&[
        "gen", "--width", "5", "--height", "4", "--agents", "3", "--seed", "11", "--map-out", &map,
        "--instance-out", &inst,
    ]);
    assert_eq!(o.status.code(), Some(0));
    let first = std::fs::read_to_string(&inst).unwrap();
    assert!(first.starts_with("agents 3"));
    let o = mapf(&["solve", "--map", &map, "--instance", &inst, "--algo", "cbs"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().filter(|l| l.starts_with("agent ")).count(), 3);
    assert_eq!(mapf(&["gen", "--width", "2", "--height", "1", "--agents", "3", "--map-out", &map, "--instance-out", &inst]).status.code(), Some(2));
}

#[test]
fn bench_writes_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "suite.toml",
        "grid_sizes = [[3, 3]]\nobstacle_rates = [0.0]\nagents_min = 1\nagents_max = 2\n\
         instances_per_point = 2\ntimeout_secs = 10.0\n",
    );
    let csv = dir.path().join("rows.csv");
    let summary = dir.path().join("summary.csv");
    let o = mapf(&[
        "bench",
        &cfg,
        "--out",
        &csv.to_string_lossy(),
        "--summary",
        &summary.to_string_lossy(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(rows.lines().count(), 1 + 2 * 2 * 3);
    assert!(rows.starts_with("instance_id,algorithm,objective,k,status,soc,makespan,delta,var_count,clause_count,wall_time_ms"));
    let summary = std::fs::read_to_string(&summary).unwrap();
    assert_eq!(summary.lines().count(), 1 + 2 * 3);
    assert!(summary.lines().skip(1).all(|l| l.contains(",1.000,")));
    let bad = write(dir.path(), "bad.toml", "timeout_secs = -1.0\n");
    assert_eq!(mapf(&["bench", &bad]).status.code(), Some(2));
}
