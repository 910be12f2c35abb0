use std::fmt::Write;

use serde::Serialize;

use crate::ids::{ActivationId, WorkerId, ZoneId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    /// A storage read ran out of attempts or an impera was rejected.
    Failed,
    /// The divide itself could not be placed.
    Rejected,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Success => "success",
            Outcome::Failed => "failed",
            Outcome::Rejected => "rejected",
        }
    }
}

/// One divide invocation, from the user's point of view.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DivideRecord {
    pub activation: ActivationId,
    pub run: u32,
    pub arrival_ms: u64,
    /// Arrival to answer; `None` when rejected.
    pub latency_ms: Option<u64>,
    /// Storage retries of this divide and its imperas.
    pub retries: u32,
    pub outcome: Outcome,
    pub worker: Option<WorkerId>,
    pub zone: Option<ZoneId>,
    /// Every impera ran on the divide's worker.
    pub colocated: bool,
    /// Divide and every impera ran on heavy-free workers of the fast zone.
    pub fast: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Summary {
    pub invocations: usize,
    pub completed: usize,
    pub failed: usize,
    pub rejected: usize,
    pub mean_ms: f64,
    pub median_ms: f64,
    pub p95_ms: f64,
    pub stdev_ms: f64,
    pub total_retries: u64,
    pub requests_with_retries: usize,
    pub colocation_fraction: f64,
    pub fast_fraction: f64,
    pub fast_zone_fraction: f64,
    pub rejected_placements: usize,
    pub constraint_violations: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SimMetrics {
    pub invocations: Vec<DivideRecord>,
    pub summary: Summary,
}

/// Arithmetic mean; 0 for an empty series.
pub fn mean(xs: &[u64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().map(|&x| x as f64).sum::<f64>() / xs.len() as f64
}

/// Median of an ascending series (mean of the two middle values when even).
pub fn median(sorted: &[u64]) -> f64 {
    let n = sorted.len();
    match n {
        0 => 0.0,
        _ if n % 2 == 1 => sorted[n / 2] as f64,
        _ => (sorted[n / 2 - 1] as f64 + sorted[n / 2] as f64) / 2.0,
    }
}

/// Nearest-rank percentile of an ascending series.
pub fn percentile(sorted: &[u64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1] as f64
}

/// Population standard deviation.
pub fn stdev(xs: &[u64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let m = mean(xs);
    let var = xs.iter().map(|&x| (x as f64 - m).powi(2)).sum::<f64>() / xs.len() as f64;
    var.sqrt()
}

impl SimMetrics {
    pub fn from_records(
        invocations: Vec<DivideRecord>,
        fast_zone: &ZoneId,
        rejected_placements: usize,
        constraint_violations: usize,
    ) -> Self {
        let lat = sorted_latencies(&invocations);
        let n = invocations.len();
        let frac = |k: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
        let count = |o: Outcome| invocations.iter().filter(|r| r.outcome == o).count();
        let summary = Summary {
            invocations: n,
            completed: count(Outcome::Success),
            failed: count(Outcome::Failed),
            rejected: count(Outcome::Rejected),
            mean_ms: mean(&lat),
            median_ms: median(&lat),
            p95_ms: percentile(&lat, 95.0),
            stdev_ms: stdev(&lat),
            total_retries: invocations.iter().map(|r| u64::from(r.retries)).sum(),
            requests_with_retries: invocations.iter().filter(|r| r.retries > 0).count(),
            colocation_fraction: frac(invocations.iter().filter(|r| r.colocated).count()),
            fast_fraction: frac(invocations.iter().filter(|r| r.fast).count()),
            fast_zone_fraction: frac(
                invocations
                    .iter()
                    .filter(|r| r.zone.as_ref() == Some(fast_zone))
                    .count(),
            ),
            rejected_placements,
            constraint_violations,
        };
        Self {
            invocations,
            summary,
        }
    }

    pub fn sorted_latencies(&self) -> Vec<u64> {
        sorted_latencies(&self.invocations)
    }

    /// `(percentile, latency)` pairs: the latency of the y-th % fastest
    /// invocation.
    pub fn percentile_series(&self) -> Vec<(f64, u64)> {
        let lat = self.sorted_latencies();
        let n = lat.len() as f64;
        lat.iter()
            .enumerate()
            .map(|(i, &l)| (100.0 * (i + 1) as f64 / n, l))
            .collect()
    }

    /// Per-invocation rows followed by a `metric,value` footer.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "activation,run,arrival_ms,latency_ms,retries,outcome,worker,zone,colocated,fast\n",
        );
        for r in &self.invocations {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.activation,
                r.run,
                r.arrival_ms,
                r.latency_ms.map(|l| l.to_string()).unwrap_or_default(),
                r.retries,
                r.outcome.as_str(),
                r.worker.as_ref().map(|w| w.as_str()).unwrap_or(""),
                r.zone.as_ref().map(|z| z.as_str()).unwrap_or(""),
                r.colocated,
                r.fast
            );
        }
        out.push('\n');
        out.push_str("metric,value\n");
        for (k, v) in self.summary.fields() {
            let _ = writeln!(out, "{k},{v}");
        }
        out
    }

    pub fn series_csv(&self) -> String {
        let mut out = String::from("percentile,latency_ms\n");
        for (p, l) in self.percentile_series() {
            let _ = writeln!(out, "{p:.4},{l}");
        }
        out
    }
}

impl Summary {
    pub fn fields(&self) -> Vec<(&'static str, String)> {
        vec![
            ("invocations", self.invocations.to_string()),
            ("completed", self.completed.to_string()),
            ("failed", self.failed.to_string()),
            ("rejected", self.rejected.to_string()),
            ("mean_ms", format!("{:.3}", self.mean_ms)),
            ("median_ms", format!("{:.3}", self.median_ms)),
            ("p95_ms", format!("{:.3}", self.p95_ms)),
            ("stdev_ms", format!("{:.3}", self.stdev_ms)),
            ("total_retries", self.total_retries.to_string()),
            (
                "requests_with_retries",
                self.requests_with_retries.to_string(),
            ),
            (
                "colocation_fraction",
                format!("{:.6}", self.colocation_fraction),
            ),
            ("fast_fraction", format!("{:.6}", self.fast_fraction)),
            (
                "fast_zone_fraction",
                format!("{:.6}", self.fast_zone_fraction),
            ),
            ("rejected_placements", self.rejected_placements.to_string()),
            (
                "constraint_violations",
                self.constraint_violations.to_string(),
            ),
        ]
    }
}

fn sorted_latencies(records: &[DivideRecord]) -> Vec<u64> {
    let mut lat: Vec<u64> = records.iter().filter_map(|r| r.latency_ms).collect();
    lat.sort_unstable();
    lat
}
