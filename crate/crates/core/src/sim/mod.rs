//! Discrete-event simulation of divide/impera workloads on a multi-zone
//! cluster with eventually-consistent storage.

mod compare;
mod config;
mod engine;
mod metrics;
mod storage;

pub use compare::{
    compare_policies, comparison_csv, comparison_series_csv, comparison_table, PolicyResult,
};
pub use config::{Arrivals, HeavySpec, SimConfig, StorageModel, Timing, WorkloadSpec, ZoneLatency};
pub use engine::{event_log, run_metrics, run_simulation, EventKind, SimEvent, SimOutput};
pub use metrics::{mean, median, percentile, stdev, DivideRecord, Outcome, SimMetrics, Summary};
pub use storage::{EventualStore, Object};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
}
