//! WebAssembly bindings for the gridwatch browser demo.

use wasm_bindgen::prelude::*;

pub mod demo;

fn js(e: gridwatch::GridwatchError) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen(js_name = gridNames)]
pub fn grid_names() -> String {
    demo::grid_names()
}

#[wasm_bindgen(js_name = gridInfo)]
pub fn grid_info(name: &str) -> Result<String, JsError> {
    demo::grid_info(name).map_err(js)
}

/// Simulate and detect; returns the posterior trace as JSON.
#[wasm_bindgen(js_name = runDetection)]
pub fn run_detection(
    grid: &str,
    scenario: &str,
    steps: usize,
    seed: u64,
    alpha: f64,
    rho: f64,
    f_known: bool,
) -> Result<String, JsError> {
    demo::run_detection(grid, scenario, steps, seed, alpha, rho, f_known).map_err(js)
}

/// Correlation heatmap and candidate branches as JSON.
#[wasm_bindgen(js_name = localizeOutage)]
pub fn localize_outage(grid: &str, scenario: &str, seed: u64, eps_conn: f64, eps_zero: f64) -> Result<String, JsError> {
    demo::localize_outage(grid, scenario, seed, eps_conn, eps_zero).map_err(js)
}

#[wasm_bindgen(js_name = delayBound)]
pub fn delay_bound(alpha: f64, rho: f64, kl: f64) -> Result<f64, JsError> {
    demo::detection_delay_bound(alpha, rho, kl).map_err(js)
}
