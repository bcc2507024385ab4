//! Browser bindings for the demo page in `www/`.
//!
//! Every exported function takes the design as a JSON object using the same
//! keys as the TOML config (`n`, `N`, `W2`, `k`, `mu_y`, ...) and returns a
//! JSON string. The plain Rust versions (`*_json`) are what the wasm exports
//! call, so they can be tested natively.

use hhme_core::montecarlo::{self, RunConfig};
use hhme_core::popgen::{generate_population, parameters_from_population, PopulationSpec};
use hhme_core::report::{self, SimulationReport};
use hhme_core::{reference, theory, ParameterSet, ValidatedParameterSet};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Upper bound on replications per call, to keep the page responsive.
pub const MAX_BROWSER_REPS: u64 = 50_000;

/// Upper bound on points in an m2 curve.
pub const MAX_CURVE_POINTS: usize = 2_000;

fn parse(params_json: &str) -> Result<ValidatedParameterSet, String> {
    let p: ParameterSet = serde_json::from_str(params_json).map_err(|e| e.to_string())?;
    p.validate().map_err(|e| e.to_string())
}

fn json<T: Serialize>(value: &T) -> Result<String, String> {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

/// The reference design, as JSON, to seed the form.
pub fn reference_design_json() -> String {
    serde_json::to_string(&reference::reference_design()).expect("reference design serializes")
}

/// Closed-form MSE table (with decomposition), `b*`, `m*` and efficiency gains.
pub fn theory_json(params_json: &str) -> Result<String, String> {
    let p = parse(params_json)?;
    let rep = report::theory_report(&p).map_err(|e| e.to_string())?;
    rep.to_json().map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct Curve {
    m2_opt: f64,
    mse_min: f64,
    mse_t1: f64,
    mse_tr: f64,
    m2: Vec<f64>,
    mse: Vec<f64>,
}

/// MSE of `t_p` as a function of `m2` on `points` evenly spaced values in `[lo, hi]`.
pub fn mse_curve_json(params_json: &str, lo: f64, hi: f64, points: usize) -> Result<String, String> {
    let p = parse(params_json)?;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(format!("invalid range [{lo}, {hi}]"));
    }
    if !(2..=MAX_CURVE_POINTS).contains(&points) {
        return Err(format!("points must be between 2 and {MAX_CURVE_POINTS}"));
    }
    let (_, m2_opt) = theory::m2_opt(&p).map_err(|e| e.to_string())?;
    let m2: Vec<f64> = (0..points).map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64).collect();
    let mse = m2.iter().map(|&m| theory::mse_tp(&p, m)).collect();
    json(&Curve {
        m2_opt,
        mse_min: theory::mse_tp_min(&p).map_err(|e| e.to_string())?,
        mse_t1: theory::mse_t1(&p).total,
        mse_tr: theory::mse_tr(&p).total,
        m2,
        mse,
    })
}

/// Generates the population for the design (which must set `N`) and runs a
/// single-threaded Monte Carlo check at the optimal coefficients.
pub fn simulate_json(params_json: &str, reps: u32, seed: u32) -> Result<String, String> {
    let design = parse(params_json)?;
    let reps = u64::from(reps);
    if reps == 0 || reps > MAX_BROWSER_REPS {
        return Err(format!("reps must be between 1 and {MAX_BROWSER_REPS}"));
    }
    let seed = u64::from(seed);
    let run = || -> hhme_core::Result<SimulationReport> {
        let pop = generate_population(&PopulationSpec::from_parameters(&design)?, seed)?;
        let params = parameters_from_population(&pop, design.n, design.k, design.errors).validate()?;
        let cfg = RunConfig { workers: 1, ..RunConfig::new(reps, seed) };
        Ok(SimulationReport::new(montecarlo::run(&pop, &params, &cfg)?, None, 0.05))
    };
    let rep = run().map_err(|e| e.to_string())?;
    rep.to_json().map_err(|e| e.to_string())
}

#[wasm_bindgen(js_name = referenceDesign)]
pub fn reference_design() -> String {
    reference_design_json()
}

#[wasm_bindgen(js_name = theoryTable)]
pub fn theory_table(params_json: &str) -> Result<String, JsError> {
    theory_json(params_json).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = mseCurve)]
pub fn mse_curve(params_json: &str, lo: f64, hi: f64, points: usize) -> Result<String, JsError> {
    mse_curve_json(params_json, lo, hi, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn simulate(params_json: &str, reps: u32, seed: u32) -> Result<String, JsError> {
    simulate_json(params_json, reps, seed).map_err(|e| JsError::new(&e))
}
