//! Python bindings. Scenes and mixture targets cross the boundary as JSON
//! strings in the same format the CLI reads and writes.

use std::path::Path;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use redistill::diffusion::{ddim_sample as ddim, oracle_epsilon as eps, GaussianMixtureTarget};
use redistill::eval::{adjacent_view_inconsistency as adjacent, demo_config, run_experiment_config};
use redistill::render::{pose_grid, render as splat, CameraPose, RenderConfig, Scene};
use redistill::retrieval::{load_db, retrieve as two_stage, save_db, tokenize, RetrievalConfig};
use redistill::synthetic::{SyntheticWorld, WorldConfig};
use redistill::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn parse<T: serde::de::DeserializeOwned>(json: &str) -> PyResult<T> {
    serde_json::from_str(json).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn scene(json: &str) -> PyResult<Scene> {
    let s: Scene = parse(json)?;
    s.validate().map_err(py_err)?;
    Ok(s)
}

/// Flattened row-major render of a scene at `azimuth`.
#[pyfunction]
#[pyo3(signature = (scene_json, azimuth, resolution=16))]
fn render(scene_json: &str, azimuth: f64, resolution: usize) -> PyResult<Vec<f64>> {
    let cfg = RenderConfig { resolution, ..Default::default() };
    cfg.validate().map_err(py_err)?;
    Ok(splat(&scene(scene_json)?, CameraPose::new(azimuth), &cfg).into_vec())
}

#[pyfunction]
fn oracle_epsilon(x_t: Vec<f64>, t: f64, target_json: &str) -> PyResult<Vec<f64>> {
    let target: GaussianMixtureTarget = parse(target_json)?;
    eps(&x_t, t, &target).map_err(py_err)
}

#[pyfunction]
fn ddim_sample(target_json: &str, steps: usize, x_start: Vec<f64>, t_start: f64) -> PyResult<Vec<f64>> {
    let target: GaussianMixtureTarget = parse(target_json)?;
    ddim(&target, steps, &x_start, t_start).map_err(py_err)
}

#[pyfunction]
fn embed_text(text: &str) -> PyResult<Vec<f64>> {
    redistill::retrieval::embed_text(&tokenize(text)).map_err(py_err)
}

/// Writes the synthetic asset database and returns its record count.
#[pyfunction]
#[pyo3(signature = (path, seed=None))]
fn build_synthetic_db(path: &str, seed: Option<u64>) -> PyResult<usize> {
    let mut cfg = WorldConfig::default();
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let world = SyntheticWorld::build(&cfg).map_err(py_err)?;
    save_db(&world.index, Path::new(path)).map_err(py_err)?;
    Ok(world.index.len())
}

/// `(uid, score)` pairs, best first.
#[pyfunction]
#[pyo3(signature = (db_path, prompt, n=3, n_prime=10))]
fn retrieve(db_path: &str, prompt: &str, n: usize, n_prime: usize) -> PyResult<Vec<(String, f64)>> {
    let index = load_db(Path::new(db_path)).map_err(py_err)?;
    let cfg = RetrievalConfig { n, n_prime, ..Default::default() };
    let r = two_stage(&tokenize(prompt), &index, &cfg).map_err(py_err)?;
    Ok(r.records(&index).iter().map(|rec| rec.uid.clone()).zip(r.scores.iter().copied()).collect())
}

#[pyfunction]
#[pyo3(signature = (scene_json, poses=24))]
fn adjacent_view_inconsistency(scene_json: &str, poses: usize) -> PyResult<f64> {
    let grid = pose_grid(poses, std::f64::consts::PI / poses.max(1) as f64);
    adjacent(&scene(scene_json)?, &grid, &RenderConfig::default()).map_err(py_err)
}

/// Runs the demo experiment into `out_dir`; returns `(variant, report CSV)` pairs.
#[pyfunction]
#[pyo3(signature = (out_dir, seed=0))]
fn run_demo(out_dir: &str, seed: u64) -> PyResult<Vec<(String, String)>> {
    let cfg = demo_config(out_dir, seed);
    let out = run_experiment_config(&cfg).map_err(py_err)?;
    Ok(out.reports.iter().map(|r| (r.variant.name().to_string(), r.to_csv())).collect())
}

#[pymodule]
fn redistill_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(render, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_epsilon, m)?)?;
    m.add_function(wrap_pyfunction!(ddim_sample, m)?)?;
    m.add_function(wrap_pyfunction!(embed_text, m)?)?;
    m.add_function(wrap_pyfunction!(build_synthetic_db, m)?)?;
    m.add_function(wrap_pyfunction!(retrieve, m)?)?;
    m.add_function(wrap_pyfunction!(adjacent_view_inconsistency, m)?)?;
    m.add_function(wrap_pyfunction!(run_demo, m)?)?;
    Ok(())
}
