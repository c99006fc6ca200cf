//! WebAssembly bindings for the browser demo. Each export takes plain
//! numbers and strings and returns a JSON document; the `*_json` functions
//! hold the logic so they can be tested natively.

use rotsolve::harness::{
    mix_seed, rho_sweep, sparsity_diagnostic, ExperimentSpec, MethodSpec, RhoPolicy, TAG_MODEL,
};
use rotsolve::population::{oracle_quantities, oracle_rotation, profile_vector, ModelRecipe, PopulationModel};
use rotsolve::selection::logspace;
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Largest feature count the demo accepts.
pub const MAX_P: usize = 200;
/// Largest replicate count the demo accepts.
pub const MAX_REPS: usize = 200;
/// Largest ρ grid the demo accepts.
pub const MAX_POINTS: usize = 25;

type DemoResult<T> = Result<T, String>;

fn check_range(what: &str, value: usize, lo: usize, hi: usize) -> DemoResult<()> {
    if value < lo || value > hi {
        return Err(format!("{what} must lie in [{lo}, {hi}], got {value}"));
    }
    Ok(())
}

fn check_positive(what: &str, value: f64) -> DemoResult<()> {
    if !(value > 0.0 && value.is_finite()) {
        return Err(format!("{what} must be positive, got {value}"));
    }
    Ok(())
}

fn recipe(model: &str, p: usize, level: f64) -> DemoResult<ModelRecipe> {
    check_range("p", p, 2, MAX_P)?;
    ModelRecipe::parse(model, p, level).map_err(|e| e.to_string())
}

fn build(recipe: &ModelRecipe, seed: u64) -> DemoResult<PopulationModel> {
    recipe.build(mix_seed(seed, 0, TAG_MODEL)).map_err(|e| e.to_string())
}

fn to_json(value: &impl Serialize) -> DemoResult<String> {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

#[derive(Debug, Serialize)]
struct CurvesView {
    bayes_error: f64,
    raw: Vec<f64>,
    oracle: Vec<f64>,
    empirical: Vec<f64>,
}

/// Share of `‖β‖²` held by the j largest coordinates, before rotation,
/// after the population rotation, and after estimated rotations averaged
/// over `reps` training sets of `n` rows per class.
pub fn sparsity_curves_json(
    model: &str,
    p: usize,
    level: f64,
    rho: f64,
    n: usize,
    reps: usize,
    seed: u64,
) -> DemoResult<String> {
    check_positive("rho", rho)?;
    check_range("n", n, 1, 1000)?;
    check_range("reps", reps, 1, MAX_REPS)?;
    let pop = build(&recipe(model, p, level)?, seed)?;
    let curves = sparsity_diagnostic(&pop, rho, n, n, reps, seed).map_err(|e| e.to_string())?;
    let bayes_error = oracle_quantities(&pop).map_err(|e| e.to_string())?.bayes_error;
    to_json(&CurvesView {
        bayes_error,
        raw: curves.raw,
        oracle: curves.oracle,
        empirical: curves.empirical,
    })
}

#[derive(Debug, Serialize)]
struct BetaView {
    beta: Vec<f64>,
    rotated: Vec<f64>,
    eigenvalues: Vec<f64>,
    raw_l0: usize,
    rotated_l0: usize,
    raw_l1_l2: f64,
    rotated_l1_l2: f64,
}

/// Coordinates of β and of `Uᵀβ` for the population rotation at `rho`.
pub fn rotated_beta_json(model: &str, p: usize, level: f64, rho: f64, seed: u64) -> DemoResult<String> {
    check_positive("rho", rho)?;
    let pop = build(&recipe(model, p, level)?, seed)?;
    let q = oracle_quantities(&pop).map_err(|e| e.to_string())?;
    let basis = oracle_rotation(&pop, rho).map_err(|e| e.to_string())?;
    let rotated = basis.rotate_vector(q.beta.view()).map_err(|e| e.to_string())?;
    let raw = profile_vector(q.beta.clone());
    let rot = profile_vector(rotated.clone());
    to_json(&BetaView {
        beta: q.beta.to_vec(),
        rotated: rotated.to_vec(),
        eigenvalues: basis.eigenvalues.to_vec(),
        raw_l0: raw.l0,
        rotated_l0: rot.l0,
        raw_l1_l2: raw.l1_l2_ratio,
        rotated_l1_l2: rot.l1_l2_ratio,
    })
}

#[derive(Debug, Serialize)]
struct RhoPoint {
    rho: f64,
    road: Option<f64>,
    rs_road: Option<f64>,
    oracle: Option<f64>,
}

/// Mean test error of ROAD, RS-ROAD and the oracle rule on a log-spaced ρ
/// grid from `rho_lo` to `rho_hi`.
#[allow(clippy::too_many_arguments)]
pub fn rho_curve_json(
    model: &str,
    p: usize,
    level: f64,
    n: usize,
    reps: usize,
    seed: u64,
    rho_lo: f64,
    rho_hi: f64,
    points: usize,
) -> DemoResult<String> {
    check_positive("rho_lo", rho_lo)?;
    check_positive("rho_hi", rho_hi)?;
    if rho_hi < rho_lo {
        return Err(format!("rho_hi ({rho_hi}) is below rho_lo ({rho_lo})"));
    }
    check_range("n", n, 2, 1000)?;
    check_range("reps", reps, 1, MAX_REPS)?;
    check_range("points", points, 1, MAX_POINTS)?;
    let rho = RhoPolicy::default();
    let methods = ["road", "rs-road", "oracle"]
        .iter()
        .map(|m| MethodSpec::parse(m, &rho))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let mut spec = ExperimentSpec::new(recipe(model, p, level)?, n, n, methods);
    spec.replicates = reps;
    spec.master_seed = seed;
    let grid = logspace(rho_lo, rho_hi, points);
    let rows = rho_sweep(&spec, &grid).map_err(|e| e.to_string())?;
    let mean = |g: f64, name: &str| rows.iter().find(|r| r.grid == g && r.method == name).and_then(|r| r.mean);
    let curve: Vec<RhoPoint> = grid
        .iter()
        .map(|&g| RhoPoint {
            rho: g,
            road: mean(g, "road"),
            rs_road: mean(g, "rs-road"),
            oracle: mean(g, "oracle"),
        })
        .collect();
    to_json(&curve)
}

#[wasm_bindgen]
pub fn sparsity_curves(
    model: &str,
    p: usize,
    level: f64,
    rho: f64,
    n: usize,
    reps: usize,
    seed: u32,
) -> Result<String, JsError> {
    sparsity_curves_json(model, p, level, rho, n, reps, seed as u64).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn rotated_beta(model: &str, p: usize, level: f64, rho: f64, seed: u32) -> Result<String, JsError> {
    rotated_beta_json(model, p, level, rho, seed as u64).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn rho_curve(
    model: &str,
    p: usize,
    level: f64,
    n: usize,
    reps: usize,
    seed: u32,
    rho_lo: f64,
    rho_hi: f64,
    points: usize,
) -> Result<String, JsError> {
    rho_curve_json(model, p, level, n, reps, seed as u64, rho_lo, rho_hi, points).map_err(|e| JsError::new(&e))
}
