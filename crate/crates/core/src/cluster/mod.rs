//! Function registry, static cluster configuration and the live tracking
//! tables the controller consults when checking (anti-)affinity.

mod activity;
mod config;

use thiserror::Error;

pub use activity::{
    ActivityState, Instance, Placement, Released, Snapshot, StateError, WorkerActivity,
    WorkerSnapshot,
};
pub use config::{ClusterConfig, FunctionMeta, Registry, WorkerEntry, WorkerSpec};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("malformed file: {0}")]
    Yaml(#[from] serde_yaml::Error),
    #[error("{0}")]
    Invalid(String),
}
