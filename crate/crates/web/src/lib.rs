//! Browser bindings: generate a grid instance, solve it, and inspect the
//! per-agent decision diagram layers. Every call takes and returns JSON text.

use std::sync::Arc;
use std::time::Duration;

use mapfsat::bench::{run_algorithm, Algorithm, IdChoice};
use mapfsat::instance::{
    generate_grid_instance, parse_instance, parse_map, shortest_path_costs, write_instance, write_map, GridGenConfig,
    MapfInstance,
};
use mapfsat::sat::SatBackend;
use mapfsat::satloop::{Limits, Objective, Status};
use mapfsat::teg::{build_mdd_teg, build_teg};
use serde::Serialize;
use wasm_bindgen::prelude::*;

type Cell = [usize; 2];

#[derive(Serialize)]
struct GridView {
    width: usize,
    height: usize,
    /// Row-major, `true` where passable.
    free: Vec<bool>,
    starts: Vec<Cell>,
    goals: Vec<Cell>,
    map_text: String,
    instance_text: String,
}

#[derive(Serialize)]
struct SolveView {
    status: &'static str,
    soc: Option<usize>,
    makespan: Option<usize>,
    delta: Option<usize>,
    var_count: Option<u32>,
    clause_count: Option<usize>,
    millis: f64,
    paths: Vec<Vec<Cell>>,
}

#[derive(Serialize)]
struct LayerView {
    depth: usize,
    xi0: usize,
    mdd_layers: Vec<Vec<Cell>>,
    mdd_vertices: usize,
    basic_vertices: usize,
    mdd_edges: usize,
    basic_edges: usize,
}

fn cell(instance: &MapfInstance, v: usize) -> Cell {
    let (r, c) = instance.graph().grid().expect("grid instance").coords(v);
    [r, c]
}

fn load(map_text: &str, instance_text: &str) -> Result<MapfInstance, String> {
    let graph = parse_map(map_text).map_err(|e| e.to_string())?;
    let instance = parse_instance(instance_text, Some(Arc::new(graph))).map_err(|e| e.to_string())?;
    Ok(instance)
}

fn json<T: Serialize>(v: &T) -> Result<String, String> {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

pub fn generate_json(width: usize, height: usize, obstacle_rate: f64, agents: usize, seed: u64) -> Result<String, String> {
    let instance = generate_grid_instance(&GridGenConfig {
        width,
        height,
        obstacle_rate,
        agents,
        seed,
        walk_steps: 20 * width * height,
    })
    .map_err(|e| e.to_string())?;
    let grid = instance.graph().grid().expect("generated grid");
    let free = (0..height)
        .flat_map(|r| (0..width).map(move |c| (r, c)))
        .map(|(r, c)| grid.is_passable(r, c))
        .collect();
    json(&GridView {
        width,
        height,
        free,
        starts: instance.agents().iter().map(|a| cell(&instance, a.start)).collect(),
        goals: instance.agents().iter().map(|a| cell(&instance, a.goal)).collect(),
        map_text: write_map(grid),
        instance_text: write_instance(&instance),
    })
}

pub fn solve_json(map_text: &str, instance_text: &str, algorithm: &str, objective: &str, id: &str, timeout_ms: f64) -> Result<String, String> {
    let instance = load(map_text, instance_text)?;
    let algorithm: Algorithm = algorithm.parse()?;
    let objective = match objective {
        "soc" => Objective::Soc,
        "makespan" => Objective::Makespan,
        other => return Err(format!("unknown objective {other:?}")),
    };
    let id = match id {
        "off" => IdChoice::Off,
        "sid" => IdChoice::Sid,
        "id" => IdChoice::Id,
        other => return Err(format!("unknown ID mode {other:?}")),
    };
    let limits = Limits {
        timeout: (timeout_ms > 0.0).then(|| Duration::from_secs_f64(timeout_ms / 1e3)),
        ..Limits::default()
    };
    let out = run_algorithm(&instance, algorithm, objective, id, &SatBackend::Embedded, &limits).map_err(|e| e.to_string())?;
    let formula = out.max_formula();
    json(&SolveView {
        status: match out.status {
            Status::Optimal => "optimal",
            Status::InfeasibleWithinBound => "infeasible-within-bound",
            Status::Timeout => "timeout",
        },
        soc: out.soc(),
        makespan: out.makespan(),
        delta: out.delta,
        var_count: formula.map(|f| f.0),
        clause_count: formula.map(|f| f.1),
        millis: out.total_ms,
        paths: out
            .solution
            .as_ref()
            .map(|s| s.paths.iter().map(|p| p.iter().map(|&v| cell(&instance, v)).collect()).collect())
            .unwrap_or_default(),
    })
}

pub fn layers_json(map_text: &str, instance_text: &str, agent: usize, delta: usize) -> Result<String, String> {
    let instance = load(map_text, instance_text)?;
    let a = *instance.agents().get(agent).ok_or_else(|| format!("no agent {agent}"))?;
    let costs = shortest_path_costs(&instance).map_err(|e| e.to_string())?;
    let xi0 = costs.xi0[agent] as usize;
    let depth = costs.mu0 as usize + delta;
    let g = instance.graph();
    let mdd = build_mdd_teg(g, depth, xi0, delta, a.start, a.goal).map_err(|e| e.to_string())?;
    let basic = build_teg(g, depth, xi0, a.start, a.goal).map_err(|e| e.to_string())?;
    json(&LayerView {
        depth,
        xi0,
        mdd_layers: mdd.layers().iter().map(|l| l.iter().map(|&v| cell(&instance, v)).collect()).collect(),
        mdd_vertices: mdd.vertex_count(),
        basic_vertices: basic.vertex_count(),
        mdd_edges: mdd.edge_count(),
        basic_edges: basic.edge_count(),
    })
}

#[wasm_bindgen]
pub fn generate(width: usize, height: usize, obstacle_rate: f64, agents: usize, seed: u32) -> Result<String, JsValue> {
    generate_json(width, height, obstacle_rate, agents, seed as u64).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn solve(map_text: &str, instance_text: &str, algorithm: &str, objective: &str, id: &str, timeout_ms: f64) -> Result<String, JsValue> {
    solve_json(map_text, instance_text, algorithm, objective, id, timeout_ms).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn mdd_layers(map_text: &str, instance_text: &str, agent: usize, delta: usize) -> Result<String, JsValue> {
    layers_json(map_text, instance_text, agent, delta).map_err(|e| JsValue::from_str(&e))
}
