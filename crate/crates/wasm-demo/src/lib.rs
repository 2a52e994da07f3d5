//! Browser demo for `fmip-core`.
//!
//! Three operations are exported to JavaScript, each returning a JSON
//! string:
//!
//! * [`generate_instance`] builds a benchmark instance and renders it in LP
//!   format.
//! * [`solve_instance`] solves it with branch and bound and with exhaustive
//!   enumeration.
//! * [`guidance_demo`] trains a small model on independent-set instances,
//!   samples guided and unguided candidate pools on a held-out instance and
//!   runs Predict&Search on the guided marginals.
//!
//! The plain-Rust versions live in [`demo`] so they can be tested natively.

use wasm_bindgen::prelude::*;

pub mod demo;

fn js(r: Result<String, String>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn generate_instance(family: &str, size: u32, seed: u32, frac_continuous: f64) -> Result<String, JsError> {
    js(demo::generate(family, size as usize, seed as u64, frac_continuous))
}

#[wasm_bindgen]
pub fn solve_instance(family: &str, size: u32, seed: u32, frac_continuous: f64, time_limit_s: f64) -> Result<String, JsError> {
    js(demo::solve(family, size as usize, seed as u64, frac_continuous, time_limit_s))
}

#[wasm_bindgen]
pub fn guidance_demo(nodes: u32, epochs: u32, candidates: u32, tau: f64, seed: u32) -> Result<String, JsError> {
    let opts = demo::GuidanceDemo {
        nodes: nodes as usize,
        epochs: epochs as usize,
        candidates: candidates as usize,
        tau,
        seed: seed as u64,
        ..Default::default()
    };
    js(demo::guidance(&opts))
}
