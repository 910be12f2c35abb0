use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::cluster::{ClusterConfig, FunctionMeta, Registry, WorkerEntry};
use crate::dsl::{parse_script, AappScript};
use crate::ids::{FunctionId, ZoneId};

/// One-way message latency between zones, in milliseconds.
///
/// Lookups fall back to the reversed pair, so a single entry per zone pair
/// is enough. Unlisted same-zone pairs cost nothing.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ZoneLatency {
    pairs: BTreeMap<(ZoneId, ZoneId), u64>,
}

impl ZoneLatency {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, from: impl Into<ZoneId>, to: impl Into<ZoneId>, ms: u64) {
        self.pairs.insert((from.into(), to.into()), ms);
    }

    pub fn with(mut self, from: &str, to: &str, ms: u64) -> Self {
        self.set(from, to, ms);
        self
    }

    pub fn get(&self, from: &ZoneId, to: &ZoneId) -> Option<u64> {
        self.pairs
            .get(&(from.clone(), to.clone()))
            .or_else(|| self.pairs.get(&(to.clone(), from.clone())))
            .copied()
            .or(if from == to { Some(0) } else { None })
    }

    fn entries(&self) -> impl Iterator<Item = (&ZoneId, &ZoneId, u64)> {
        self.pairs.iter().map(|((a, b), ms)| (a, b, *ms))
    }
}

fn default_backoff_initial() -> u64 {
    1000
}
fn default_backoff_factor() -> f64 {
    2.0
}
fn default_max_attempts() -> u32 {
    10
}

/// Eventually-consistent storage: one instance per zone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StorageModel {
    /// Time until a write becomes visible in the other zones.
    pub replication_delay_ms: u64,
    #[serde(default = "default_backoff_initial")]
    pub backoff_initial_ms: u64,
    #[serde(default = "default_backoff_factor")]
    pub backoff_factor: f64,
    /// Reads give up (and the invocation fails) after this many attempts.
    #[serde(default = "default_max_attempts")]
    pub backoff_max_attempts: u32,
}

impl Default for StorageModel {
    fn default() -> Self {
        Self {
            replication_delay_ms: 0,
            backoff_initial_ms: default_backoff_initial(),
            backoff_factor: default_backoff_factor(),
            backoff_max_attempts: default_max_attempts(),
        }
    }
}

impl StorageModel {
    /// Wait between a missed attempt `attempt` and the next one.
    pub fn backoff_after(&self, attempt: u32) -> u64 {
        let exp = attempt.saturating_sub(1).min(62) as i32;
        (self.backoff_initial_ms as f64 * self.backoff_factor.powi(exp)).round() as u64
    }
}

/// Base execution times before CPU weight and co-tenancy scaling.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timing {
    /// Divide work before it writes chunks and invokes imperas.
    #[serde(default)]
    pub divide_split_ms: u64,
    /// Divide work after all fragments are read.
    #[serde(default)]
    pub divide_assemble_ms: u64,
    /// Impera work between reading its chunk and writing its fragment.
    #[serde(default)]
    pub impera_ms: u64,
}

impl Timing {
    pub fn zero() -> Self {
        Self::default()
    }
}

/// A co-tenant compute-intensive function launched at the start of every run.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeavySpec {
    pub function: FunctionId,
    /// Zone the script is expected to pin it to.
    pub zone: ZoneId,
    pub duration_ms: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum Arrivals {
    /// Each divide is issued when the previous one has answered.
    Sequential,
    /// Divides are issued every `interval_ms` from the start of the run.
    Open { interval_ms: u64 },
}

fn default_divide() -> FunctionId {
    "divide".into()
}
fn default_impera() -> FunctionId {
    "impera".into()
}
fn default_imperas() -> u32 {
    2
}
fn default_arrivals() -> Arrivals {
    Arrivals::Sequential
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub runs: u32,
    pub divides_per_run: u32,
    #[serde(default = "default_imperas")]
    pub imperas_per_divide: u32,
    #[serde(default = "default_divide")]
    pub divide_function: FunctionId,
    #[serde(default = "default_impera")]
    pub impera_function: FunctionId,
    #[serde(default)]
    pub heavy: Vec<HeavySpec>,
    #[serde(default)]
    pub timing: Timing,
    #[serde(default = "default_arrivals")]
    pub arrivals: Arrivals,
    /// Zone whose heavy-free workers count as "fast" placements; defaults to
    /// the controller zone.
    #[serde(default)]
    pub fast_zone: Option<ZoneId>,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        Self {
            runs: 1,
            divides_per_run: 1,
            imperas_per_divide: default_imperas(),
            divide_function: default_divide(),
            impera_function: default_impera(),
            heavy: Vec::new(),
            timing: Timing::default(),
            arrivals: Arrivals::Sequential,
            fast_zone: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub cluster: ClusterConfig,
    pub script: AappScript,
    pub registry: Registry,
    pub zone_latency: ZoneLatency,
    /// Where the controller (and the users) sit.
    pub controller_zone: ZoneId,
    pub storage: StorageModel,
    pub workload: WorkloadSpec,
    pub seed: u64,
    /// Service-time multiplier per co-resident heavy instance.
    pub heavy_slowdown: f64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        let zones = self.cluster.zones();
        if self.cluster.is_empty() {
            return bad("cluster has no workers".into());
        }
        if !zones.contains(&&self.controller_zone) {
            return bad(format!(
                "controller zone `{}` has no workers",
                self.controller_zone
            ));
        }
        for a in zones.iter().copied().chain([&self.controller_zone]) {
            for b in &zones {
                if self.zone_latency.get(a, b).is_none() {
                    return bad(format!("no latency between zones `{a}` and `{b}`"));
                }
            }
        }
        for (a, b, _) in self.zone_latency.entries() {
            if !zones.contains(&a) || !zones.contains(&b) {
                return bad(format!("latency entry references unknown zone `{a}`/`{b}`"));
            }
        }
        let w = &self.workload;
        if w.runs == 0 || w.divides_per_run == 0 || w.imperas_per_divide == 0 {
            return bad("workload counts must be at least 1".into());
        }
        if let Arrivals::Open { interval_ms: 0 } = w.arrivals {
            return bad("open arrivals need a positive interval".into());
        }
        if let Some(z) = &w.fast_zone {
            if !zones.contains(&z) {
                return bad(format!("fast zone `{z}` has no workers"));
            }
        }
        let fns = [&w.divide_function, &w.impera_function]
            .into_iter()
            .chain(w.heavy.iter().map(|h| &h.function));
        for f in fns {
            if self.registry.get(f.as_str()).is_none() {
                return bad(format!("workload function `{f}` is not registered"));
            }
        }
        for h in &w.heavy {
            if !zones.contains(&&h.zone) {
                return bad(format!(
                    "heavy function `{}` pinned to unknown zone `{}`",
                    h.function, h.zone
                ));
            }
        }
        let s = &self.storage;
        if s.backoff_initial_ms == 0
            || s.backoff_factor.is_nan()
            || s.backoff_factor < 1.0
            || s.backoff_max_attempts == 0
        {
            return bad("backoff needs initial > 0, factor >= 1 and at least one attempt".into());
        }
        if self.heavy_slowdown.is_nan() || self.heavy_slowdown < 1.0 {
            return bad("heavy_slowdown must be >= 1".into());
        }
        Ok(())
    }

    pub fn fast_zone(&self) -> &ZoneId {
        self.workload
            .fast_zone
            .as_ref()
            .unwrap_or(&self.controller_zone)
    }

    /// Parses a simulation file. File references (`script_path`,
    /// `cluster_path`, `registry_path`) are read through `resolve`.
    pub fn from_yaml(
        text: &str,
        resolve: &dyn Fn(&str) -> Result<String, String>,
    ) -> Result<Self, SimError> {
        let file: SimFile =
            serde_yaml::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        let load = |path: &str| resolve(path).map_err(|e| SimError::Config(format!("{path}: {e}")));

        let script_text = match (file.script, file.script_path) {
            (Some(t), None) => t,
            (None, Some(p)) => load(&p)?,
            _ => {
                return Err(SimError::Config(
                    "give exactly one of `script` or `script_path`".into(),
                ))
            }
        };
        let script =
            parse_script(&script_text).map_err(|e| SimError::Config(format!("script: {e}")))?;

        let cluster = match (file.cluster, file.cluster_path) {
            (Some(entries), None) => ClusterConfig::from_entries(entries),
            (None, Some(p)) => ClusterConfig::from_yaml(&load(&p)?),
            _ => {
                return Err(SimError::Config(
                    "give exactly one of `cluster` or `cluster_path`".into(),
                ))
            }
        }
        .map_err(|e| SimError::Config(format!("cluster: {e}")))?;

        let registry = match (file.registry, file.registry_path) {
            (Some(entries), None) => Registry::from_entries(entries),
            (None, Some(p)) => Registry::from_yaml(&load(&p)?),
            _ => {
                return Err(SimError::Config(
                    "give exactly one of `registry` or `registry_path`".into(),
                ))
            }
        }
        .map_err(|e| SimError::Config(format!("registry: {e}")))?;

        let mut zone_latency = ZoneLatency::new();
        for l in file.zone_latency {
            zone_latency.set(l.from, l.to, l.ms);
        }
        let controller_zone = match file.controller_zone {
            Some(z) => z,
            None => cluster
                .iter()
                .next()
                .map(|(_, s)| s.zone.clone())
                .ok_or_else(|| SimError::Config("cluster has no workers".into()))?,
        };
        let cfg = SimConfig {
            cluster,
            script,
            registry,
            zone_latency,
            controller_zone,
            storage: file.storage,
            workload: file.workload,
            seed: file.seed,
            heavy_slowdown: file.heavy_slowdown,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Deserialize)]
struct LatencyEntry {
    from: ZoneId,
    to: ZoneId,
    ms: u64,
}

fn default_slowdown() -> f64 {
    3.0
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SimFile {
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    script: Option<String>,
    #[serde(default)]
    script_path: Option<String>,
    #[serde(default)]
    cluster: Option<Vec<WorkerEntry>>,
    #[serde(default)]
    cluster_path: Option<String>,
    #[serde(default)]
    registry: Option<Vec<FunctionMeta>>,
    #[serde(default)]
    registry_path: Option<String>,
    #[serde(default)]
    zone_latency: Vec<LatencyEntry>,
    #[serde(default)]
    controller_zone: Option<ZoneId>,
    #[serde(default)]
    storage: StorageModel,
    workload: WorkloadSpec,
    #[serde(default = "default_slowdown")]
    heavy_slowdown: f64,
}
