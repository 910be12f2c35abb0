//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Every export takes plain strings and numbers and returns a JSON string,
//! so the page needs no generated type definitions.

use aapp_core::cluster::{ActivityState, ClusterConfig, Registry};
use aapp_core::dsl::{check_script, check_script_standalone, parse_script, Diagnostic};
use aapp_core::scenario;
use aapp_core::scheduler::{ScheduleError, Scheduler};
use aapp_core::sim::compare_policies;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

fn to_json(v: Value) -> String {
    v.to_string()
}

fn error(stage: &str, e: impl std::fmt::Display) -> String {
    to_json(json!({ "ok": false, "stage": stage, "error": e.to_string() }))
}

/// Parses and lints `script`. `cluster_yaml` may be empty.
#[wasm_bindgen]
pub fn check(script: &str, cluster_yaml: &str) -> String {
    let parsed = match parse_script(script) {
        Ok(s) => s,
        Err(e) => {
            return to_json(json!({
                "ok": false,
                "stage": "parse",
                "error": e.to_string(),
                "line": e.location.line,
                "column": e.location.column,
            }))
        }
    };
    let diags: Vec<Diagnostic> = if cluster_yaml.trim().is_empty() {
        check_script_standalone(&parsed)
    } else {
        match ClusterConfig::from_yaml(cluster_yaml) {
            Ok(c) => check_script(&parsed, &c),
            Err(e) => return error("cluster", e),
        }
    };
    to_json(json!({ "ok": true, "policies": parsed.policies.len(), "diagnostics": diags }))
}

/// One decision with per-block reasons when nothing fits.
#[wasm_bindgen]
pub fn explain(
    script: &str,
    cluster_yaml: &str,
    registry_yaml: &str,
    state_yaml: &str,
    function: &str,
    seed: u64,
) -> String {
    let script = match parse_script(script) {
        Ok(s) => s,
        Err(e) => return error("parse", e),
    };
    let config = match ClusterConfig::from_yaml(cluster_yaml) {
        Ok(c) => c,
        Err(e) => return error("cluster", e),
    };
    let registry = match Registry::from_yaml(registry_yaml) {
        Ok(r) => r,
        Err(e) => return error("registry", e),
    };
    let state_text = if state_yaml.trim().is_empty() {
        "[]"
    } else {
        state_yaml
    };
    let state = match ActivityState::from_placements_yaml(state_text, &config, &registry) {
        Ok(s) => s,
        Err(e) => return error("state", e),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match Scheduler::new(&script, &registry, &config).schedule(function, &state, &mut rng) {
        Ok(d) => to_json(json!({ "ok": true, "decision": d })),
        Err(ScheduleError::NotSchedulable { blocks, .. }) => {
            to_json(json!({ "ok": true, "decision": null, "blocks": blocks }))
        }
        Err(e) => error("schedule", e),
    }
}

#[derive(Serialize)]
struct Row {
    name: String,
    mean_ms: f64,
    median_ms: f64,
    p95_ms: f64,
    total_retries: u64,
    requests_with_retries: usize,
    colocation_fraction: f64,
    fast_fraction: f64,
    /// Sorted latencies; the i-th is the (i+1)/n quantile.
    latencies: Vec<u64>,
}

/// Runs the bundled divide/impera experiment under all three policies.
#[wasm_bindgen]
pub fn compare(runs: u32, replication_delay_ms: u64, heavy_slowdown: f64, seed: u64) -> String {
    let mut cfg = scenario::divide_impera();
    cfg.workload.runs = runs;
    cfg.storage.replication_delay_ms = replication_delay_ms;
    cfg.heavy_slowdown = heavy_slowdown;
    cfg.seed = seed;
    match compare_policies(&cfg, &scenario::policies()) {
        Ok(results) => {
            let rows: Vec<Row> = results
                .into_iter()
                .map(|r| {
                    let s = &r.metrics.summary;
                    Row {
                        mean_ms: s.mean_ms,
                        median_ms: s.median_ms,
                        p95_ms: s.p95_ms,
                        total_retries: s.total_retries,
                        requests_with_retries: s.requests_with_retries,
                        colocation_fraction: s.colocation_fraction,
                        fast_fraction: s.fast_fraction,
                        latencies: r.metrics.sorted_latencies(),
                        name: r.name,
                    }
                })
                .collect();
            to_json(json!({ "ok": true, "rows": rows }))
        }
        Err(e) => error("simulate", e),
    }
}

/// Bundled example inputs for the page.
#[wasm_bindgen]
pub fn examples() -> String {
    to_json(json!({
        "script": scenario::TIERED_SCRIPT,
        "cluster": scenario::TIERED_CLUSTER,
        "registry": scenario::TIERED_REGISTRY,
        "state": scenario::TIERED_STATE,
        "function": "f",
    }))
}
