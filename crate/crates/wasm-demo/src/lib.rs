//! Browser bindings over the default scenario. Each exported function has a
//! plain Rust counterpart returning `Result<String, String>` so the logic is
//! testable off the browser.

use serde_json::json;
use wasm_bindgen::prelude::*;

use cpsfl_core::agent::interpret_allocation;
use cpsfl_core::airspace::MobileChannel;
use cpsfl_core::experiments::mean_round_latency;
use cpsfl_core::paradigms::{gantt_json, run_training, Paradigm, UniformPlans};
use cpsfl_core::profiles::builtin_scenario;

/// Upper bound on rounds per comparison, keeps the page responsive.
pub const MAX_ROUNDS: usize = 200;

/// Gantt JSON of round 0 plus its latency and energy.
pub fn timeline_json(paradigm: &str, split: u32, seed: u64) -> Result<String, String> {
    let p: Paradigm = paradigm.parse().map_err(|e| format!("{e}"))?;
    let s = builtin_scenario();
    s.split(split).map_err(|e| e.to_string())?;
    let channel = MobileChannel::new(&s, seed).map_err(|e| e.to_string())?;
    let mut plans = UniformPlans::for_paradigm(p, &s, split);
    let out = run_training(p, &mut plans, &s, &channel, 1, 0.0).map_err(|e| e.to_string())?;
    let o = &out[0];
    let mut g = gantt_json(&o.trace);
    g["paradigm"] = json!(p.name());
    g["tau_s"] = json!(o.tau());
    g["max_energy_J"] = json!(o.max_energy);
    Ok(g.to_string())
}

/// `[{paradigm, mean_tau_s}]` over every paradigm with equal shares.
pub fn compare_json(split: u32, rounds: usize, seed: u64) -> Result<String, String> {
    if rounds == 0 || rounds > MAX_ROUNDS {
        return Err(format!("rounds must be in 1..={MAX_ROUNDS}"));
    }
    let s = builtin_scenario();
    s.split(split).map_err(|e| e.to_string())?;
    let rows = Paradigm::ALL
        .into_iter()
        .map(|p| {
            let tau = mean_round_latency(p, &s, split, rounds, seed).map_err(|e| e.to_string())?;
            Ok(json!({ "paradigm": p.name(), "mean_tau_s": tau }))
        })
        .collect::<Result<Vec<_>, String>>()?;
    Ok(json!(rows).to_string())
}

/// Shares from comma-separated logits, each at least `min`.
pub fn allocation_json(logits: &str, min: f64) -> Result<String, String> {
    let z = logits
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("not a number: `{}`", t.trim())))
        .collect::<Result<Vec<_>, _>>()?;
    if z.iter().any(|v| !v.is_finite()) {
        return Err("logits must be finite".into());
    }
    if !(0.0..=1.0 / z.len() as f64).contains(&min) {
        return Err(format!("minimum share must be in [0, 1/{}]", z.len()));
    }
    Ok(json!(interpret_allocation(&z, min)).to_string())
}

#[wasm_bindgen]
pub fn timeline(paradigm: &str, split: u32, seed: u64) -> Result<String, JsValue> {
    timeline_json(paradigm, split, seed).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn compare(split: u32, rounds: usize, seed: u64) -> Result<String, JsValue> {
    compare_json(split, rounds, seed).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn allocate(logits: &str, min: f64) -> Result<String, JsValue> {
    allocation_json(logits, min).map_err(|e| JsValue::from_str(&e))
}
