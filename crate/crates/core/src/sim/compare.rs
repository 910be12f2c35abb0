use std::fmt::Write;

use serde::Serialize;

use super::{run_metrics, SimConfig, SimError, SimMetrics};
use crate::dsl::AappScript;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PolicyResult {
    pub name: String,
    pub metrics: SimMetrics,
}

/// Runs the same workload (same seed) once per script.
pub fn compare_policies(
    base: &SimConfig,
    policies: &[(String, AappScript)],
) -> Result<Vec<PolicyResult>, SimError> {
    policies
        .iter()
        .map(|(name, script)| {
            let cfg = SimConfig {
                script: script.clone(),
                ..base.clone()
            };
            Ok(PolicyResult {
                name: name.clone(),
                metrics: run_metrics(&cfg)?,
            })
        })
        .collect()
}

/// Fixed-width summary table, one row per policy.
pub fn comparison_table(results: &[PolicyResult]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<16} {:>6} {:>10} {:>10} {:>10} {:>8} {:>9} {:>9} {:>7}",
        "policy", "n", "mean_ms", "median_ms", "p95_ms", "retries", "w/retry", "coloc", "fast"
    );
    for r in results {
        let s = &r.metrics.summary;
        let _ = writeln!(
            out,
            "{:<16} {:>6} {:>10.1} {:>10.1} {:>10.1} {:>8} {:>9} {:>9.3} {:>7.3}",
            r.name,
            s.invocations,
            s.mean_ms,
            s.median_ms,
            s.p95_ms,
            s.total_retries,
            s.requests_with_retries,
            s.colocation_fraction,
            s.fast_fraction
        );
    }
    out
}

/// `policy` column followed by every summary metric.
pub fn comparison_csv(results: &[PolicyResult]) -> String {
    let mut out = String::new();
    let Some(first) = results.first() else {
        return out;
    };
    let header: Vec<&str> = first
        .metrics
        .summary
        .fields()
        .iter()
        .map(|(k, _)| *k)
        .collect();
    let _ = writeln!(out, "policy,{}", header.join(","));
    for r in results {
        let vals: Vec<String> = r
            .metrics
            .summary
            .fields()
            .into_iter()
            .map(|(_, v)| v)
            .collect();
        let _ = writeln!(out, "{},{}", r.name, vals.join(","));
    }
    out
}

/// Latency-percentile curves of all policies in long form.
pub fn comparison_series_csv(results: &[PolicyResult]) -> String {
    let mut out = String::from("policy,percentile,latency_ms\n");
    for r in results {
        for (p, l) in r.metrics.percentile_series() {
            let _ = writeln!(out, "{},{p:.4},{l}", r.name);
        }
    }
    out
}
