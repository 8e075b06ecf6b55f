//! Browser bindings for the demo page in `www/`.
//!
//! Every export takes plain numbers and strings and returns a JSON string.
//! The `*_json` functions hold the logic so they can be tested natively;
//! the `#[wasm_bindgen]` wrappers only convert errors.

use blin_core::analysis::{cumulative_regret, BoundReport};
use blin_core::engine::{run_blin, run_zooming_baseline, RunConfig};
use blin_core::environments::{
    constant_instance, linear_instance, two_peak_instance, zooming_dimension_estimate,
    RewardInstance,
};
use blin_core::report::{partition_snapshots, BatchSummary, CellState};
use blin_core::sequences::{AceParams, EdgeLengthSchedule};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Longest horizon the page accepts; keeps a run well under a second.
pub const MAX_HORIZON: u64 = 200_000;
const CURVE_POINTS: usize = 400;

fn instance(env: &str) -> Result<RewardInstance, String> {
    match env {
        "two-peak" => Ok(two_peak_instance()),
        "linear" => Ok(linear_instance()),
        "constant" => constant_instance(2, 0.0).map_err(|e| e.to_string()),
        other => Err(format!("unknown environment '{other}'")),
    }
}

#[derive(Serialize)]
struct Cell {
    x: f64,
    y: f64,
    width: f64,
    // 1 for one-dimensional instances, drawn as full-height strips
    height: f64,
    state: CellState,
}

#[derive(Serialize)]
struct Snapshot {
    batch: usize,
    cells: Vec<Cell>,
}

#[derive(Serialize)]
struct Simulation {
    algorithm: String,
    horizon: u64,
    rounds_used: usize,
    grid: Vec<u64>,
    final_regret: f64,
    /// `(t, regret)` pairs, thinned to a few hundred points.
    curve: Vec<(u64, f64)>,
    batches: Vec<BatchSummary>,
    snapshots: Vec<Snapshot>,
}

fn thin(regret: &[f64]) -> Vec<(u64, f64)> {
    let step = regret.len().div_ceil(CURVE_POINTS).max(1);
    let mut curve: Vec<(u64, f64)> = regret
        .iter()
        .enumerate()
        .step_by(step)
        .map(|(i, &r)| (i as u64 + 1, r))
        .collect();
    if let Some(&last) = regret.last() {
        if curve.last().map(|p| p.0) != Some(regret.len() as u64) {
            curve.push((regret.len() as u64, last));
        }
    }
    curve
}

/// Runs one algorithm (`dblin`, `ablin` or `zooming`) on a built-in environment.
pub fn simulate_json(
    env: &str,
    algorithm: &str,
    horizon: u64,
    seed: u64,
    dz: f64,
) -> Result<String, String> {
    if !(2..=MAX_HORIZON).contains(&horizon) {
        return Err(format!("T must lie in 2..={MAX_HORIZON}"));
    }
    let inst = instance(env)?;
    let schedule = match algorithm {
        "dblin" => Some(EdgeLengthSchedule::Doubling),
        "ablin" => Some(EdgeLengthSchedule::RoundedAce(
            AceParams::new(inst.dim() as u32, dz, horizon).map_err(|e| e.to_string())?,
        )),
        "zooming" => None,
        other => return Err(format!("unknown algorithm '{other}'")),
    };
    let trace = match schedule {
        Some(s) => run_blin(&RunConfig::new(horizon, s, seed), &inst),
        None => run_zooming_baseline(horizon, seed, 1.0, &inst),
    }
    .map_err(|e| e.to_string())?;
    let regret = cumulative_regret(&trace, &inst);
    let snapshots = partition_snapshots(&trace)
        .into_iter()
        .map(|s| Snapshot {
            batch: s.batch,
            cells: s
                .cells
                .iter()
                .map(|(c, state)| {
                    let (y, height) = if c.dim() > 1 {
                        (c.interval(1).0, c.edge())
                    } else {
                        (0.0, 1.0)
                    };
                    Cell {
                        x: c.interval(0).0,
                        y,
                        width: c.edge(),
                        height,
                        state: *state,
                    }
                })
                .collect(),
        })
        .collect();
    let sim = Simulation {
        algorithm: algorithm.to_string(),
        horizon,
        rounds_used: trace.rounds_used(),
        grid: trace.grid.clone(),
        final_regret: regret.last().copied().unwrap_or(0.0),
        curve: thin(&regret),
        batches: trace.batches.iter().map(BatchSummary::from).collect(),
        snapshots,
    };
    serde_json::to_string(&sim).map_err(|e| e.to_string())
}

/// Zooming numbers down to `r = 2^-depth` and the fitted `(dz, Cz)`.
pub fn zooming_json(env: &str, depth: u32) -> Result<String, String> {
    if !(3..=12).contains(&depth) {
        return Err("depth must lie in 3..=12".into());
    }
    let est = zooming_dimension_estimate(&instance(env)?, depth).map_err(|e| e.to_string())?;
    serde_json::to_string(&serde_json::json!({
        "table": est.table,
        "dz_hat": est.dz_hat,
        "cz_hat": est.cz_hat,
        "fit_depths": est.fit_depths,
    }))
    .map_err(|e| e.to_string())
}

/// Upper and lower bounds at one parameter point.
pub fn bounds_json(d: u32, dz: f64, cz: f64, horizon: f64, batches: u32) -> Result<String, String> {
    let report = BoundReport::new(d, dz, cz, horizon, batches).map_err(|e| e.to_string())?;
    serde_json::to_string(&report).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn simulate(
    env: &str,
    algorithm: &str,
    horizon: u32,
    seed: u32,
    dz: f64,
) -> Result<String, JsValue> {
    simulate_json(env, algorithm, u64::from(horizon), u64::from(seed), dz)
        .map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn zooming(env: &str, depth: u32) -> Result<String, JsValue> {
    zooming_json(env, depth).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn bounds(d: u32, dz: f64, cz: f64, horizon: f64, batches: u32) -> Result<String, JsValue> {
    bounds_json(d, dz, cz, horizon, batches).map_err(|e| JsValue::from_str(&e))
}
