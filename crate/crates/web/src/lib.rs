//! Browser bindings for a few small, single-threaded runs of `spde-core`.
//!
//! The plain functions return core results and are usable natively; the
//! `wasm_bindgen` exports wrap them for JavaScript.

use serde::Serialize;
use spde_core::config::RunConfig;
use spde_core::harness::run_study;
use spde_core::noise::rng::{fbm_pair_channel, stream};
use spde_core::noise::{FbmGenerator, NoiseSampler, TimeGrid};
use spde_core::schemes::{simulate_batch, Recording, Scheme};
use spde_core::{Error, Result};
use wasm_bindgen::prelude::*;

/// Interior nodes used by the trajectory demo.
pub const DEMO_NODES: usize = 63;
/// Snapshots returned by [`simulate`], at `0, T/4, …, T`.
pub const SNAPSHOTS: usize = 5;

fn scheme(name: &str) -> Result<Scheme> {
    match name {
        "smti" => Ok(Scheme::Smti),
        "implicit" => Ok(Scheme::Implicit),
        other => Err(Error::Parameter {
            field: "scheme".into(),
            message: format!("unknown scheme {other:?}, expected \"smti\" or \"implicit\""),
        }),
    }
}

/// fBm on `[0, 1]` sampled at `steps + 1` points, starting at zero.
pub fn fbm_path(hurst: f64, steps: usize, seed: u64) -> Result<Vec<f64>> {
    let gen = FbmGenerator::new(hurst, steps, 1.0 / steps as f64)?;
    let increments = gen.sample(&mut stream(seed, 0, fbm_pair_channel(0)));
    let mut path = Vec::with_capacity(steps + 1);
    path.push(0.0);
    let mut acc = 0.0;
    for dx in increments {
        acc += dx;
        path.push(acc);
    }
    Ok(path)
}

fn demo_config(hurst: f64, intensity: f64) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.noise.hurst = hurst;
    cfg.noise.n_modes = 32;
    cfg.noise.jumps.intensity = intensity;
    cfg.discretization.n_interior = DEMO_NODES;
    cfg
}

/// One trajectory of the default problem. Returns `SNAPSHOTS` rows of
/// `DEMO_NODES + 2` nodal values (boundary zeros included), row-major.
pub fn simulate(scheme_name: &str, hurst: f64, intensity: f64, steps: usize, seed: u64) -> Result<Vec<f64>> {
    let cfg = demo_config(hurst, intensity);
    cfg.validate()?;
    let problem = cfg.to_problem()?;
    let model = problem.discretize(DEMO_NODES)?;
    let grid = TimeGrid::new(problem.horizon, steps)?;
    let sampler = NoiseSampler::new(grid, problem.hurst(), problem.n_modes(), problem.jumps, seed)?;
    let levels: Vec<usize> = (0..SNAPSHOTS).map(|q| q * steps / (SNAPSHOTS - 1)).collect();
    let tr = simulate_batch(
        &model,
        scheme(scheme_name)?,
        &[sampler.sample(0)],
        &Recording::Steps(levels),
    )?
    .remove(0);
    let mut out = Vec::with_capacity(SNAPSHOTS * (DEMO_NODES + 2));
    for state in &tr.states {
        out.push(0.0);
        out.extend(state.iter());
        out.push(0.0);
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
pub struct StudyResult {
    pub dt: Vec<f64>,
    pub rms_error: Vec<f64>,
    pub stderr: Vec<f64>,
    pub slope: Option<f64>,
    pub theoretical_rate: f64,
}

/// Small temporal study on a coarse mesh, cheap enough for a browser tab.
pub fn convergence(scheme_name: &str, hurst: f64, samples: usize, seed: u64) -> Result<StudyResult> {
    let mut cfg = demo_config(hurst, 5.0);
    cfg.noise.n_modes = 16;
    cfg.discretization.scheme = scheme(scheme_name)?;
    cfg.discretization.n_interior = 31;
    cfg.discretization.steps = vec![8, 16, 32, 64];
    cfg.discretization.reference_steps = 512;
    cfg.study.samples = samples;
    cfg.study.seed = seed;
    cfg.validate()?;
    let table = run_study(&cfg.to_problem()?, &cfg.study_config(None))?;
    Ok(StudyResult {
        dt: table.rows.iter().map(|r| r.dt_or_h).collect(),
        rms_error: table.rows.iter().map(|r| r.rms_error).collect(),
        stderr: table.rows.iter().map(|r| r.stderr).collect(),
        slope: table.slope(),
        theoretical_rate: cfg.theoretical_rate(),
    })
}

fn js(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen(js_name = fbmPath)]
pub fn fbm_path_js(hurst: f64, steps: usize, seed: u64) -> std::result::Result<Vec<f64>, JsError> {
    fbm_path(hurst, steps, seed).map_err(js)
}

#[wasm_bindgen(js_name = simulate)]
pub fn simulate_js(
    scheme: &str,
    hurst: f64,
    intensity: f64,
    steps: usize,
    seed: u64,
) -> std::result::Result<Vec<f64>, JsError> {
    simulate(scheme, hurst, intensity, steps, seed).map_err(js)
}

/// JSON-encoded [`StudyResult`].
#[wasm_bindgen(js_name = convergence)]
pub fn convergence_js(scheme: &str, hurst: f64, samples: usize, seed: u64) -> std::result::Result<String, JsError> {
    let r = convergence(scheme, hurst, samples, seed).map_err(js)?;
    serde_json::to_string(&r).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = nodesPerSnapshot)]
pub fn nodes_per_snapshot() -> usize {
    DEMO_NODES + 2
}
