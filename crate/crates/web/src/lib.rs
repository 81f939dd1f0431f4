//! Browser bindings for the leadfollow solvers.
//!
//! Every export takes plain numbers or strings and returns a JSON string, so
//! the page needs no generated glue beyond `wasm-bindgen`'s own. The work is
//! done by the native functions in [`demo`], which are tested without a
//! browser.

use wasm_bindgen::prelude::*;

pub mod demo;

fn to_js<T: serde::Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    let value = r.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&value).map_err(|e| JsError::new(&e.to_string()))
}

/// Names of the built-in presets, as a JSON array.
#[wasm_bindgen]
pub fn preset_names() -> String {
    serde_json::to_string(&leadfollow::presets::PRESET_NAMES).unwrap_or_default()
}

/// Solves a preset with the finite-volume scheme. `t_final <= 0` keeps the
/// preset's horizon; at most `max_frames` density frames are returned.
#[wasm_bindgen]
pub fn run_preset(name: &str, t_final: f64, max_frames: usize) -> Result<String, JsError> {
    to_js(demo::run_preset(name, t_final, max_frames))
}

/// Flat and (for equal masses) W1 distance between two lists of atoms on the
/// line.
#[wasm_bindgen]
pub fn distances(
    xs_a: Vec<f64>,
    ws_a: Vec<f64>,
    xs_b: Vec<f64>,
    ws_b: Vec<f64>,
) -> Result<String, JsError> {
    to_js(demo::distances(&xs_a, &ws_a, &xs_b, &ws_b))
}

/// Runs `n` particles of a preset next to the reduced mean-field solver.
#[wasm_bindgen]
pub fn micro_vs_macro(name: &str, n: usize, seed: u64, t_final: f64) -> Result<String, JsError> {
    to_js(demo::micro_vs_macro(name, n, seed, t_final))
}
