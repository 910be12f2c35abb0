//! Bundled configurations.
//!
//! The divide/impera scenario runs on six workers in two zones (`eu`, `us`),
//! each zone with two large workers and one half-speed small worker. Two
//! heavy functions are pinned to the small workers. Three policies are
//! bundled: affinity plus anti-affinity (`aapp`), anti-affinity only and
//! plain placement (`app`).

use crate::cluster::{ClusterConfig, Registry};
use crate::dsl::{parse_script, AappScript};
use crate::sim::{SimConfig, SimError, Timing};

pub const DIVIDE_IMPERA_SIM: &str = include_str!("../scenarios/divide_impera/sim.yaml");
pub const DIVIDE_IMPERA_CLUSTER: &str = include_str!("../scenarios/divide_impera/cluster.yaml");
pub const DIVIDE_IMPERA_REGISTRY: &str = include_str!("../scenarios/divide_impera/registry.yaml");
pub const AAPP_SCRIPT: &str = include_str!("../scenarios/divide_impera/aapp.aapp");
pub const ANTI_AFFINITY_SCRIPT: &str =
    include_str!("../scenarios/divide_impera/anti_affinity.aapp");
pub const APP_SCRIPT: &str = include_str!("../scenarios/divide_impera/app.aapp");

pub const ZONED_SCRIPT: &str = include_str!("../scenarios/zoned.aapp");
pub const ZONED_CLUSTER: &str = include_str!("../scenarios/zoned_cluster.yaml");
pub const TIERED_SCRIPT: &str = include_str!("../scenarios/tiered.aapp");
pub const TIERED_CLUSTER: &str = include_str!("../scenarios/tiered_cluster.yaml");
pub const TIERED_REGISTRY: &str = include_str!("../scenarios/tiered_registry.yaml");
pub const TIERED_STATE: &str = include_str!("../scenarios/tiered_state.yaml");

/// Policy names in the order they are usually reported.
pub const POLICIES: [&str; 3] = ["app", "anti_affinity", "aapp"];

/// Resolves the relative paths used by the bundled `sim.yaml`.
pub fn bundled_file(path: &str) -> Result<String, String> {
    let text = match path.trim_start_matches("./") {
        "cluster.yaml" => DIVIDE_IMPERA_CLUSTER,
        "registry.yaml" => DIVIDE_IMPERA_REGISTRY,
        "aapp.aapp" => AAPP_SCRIPT,
        "anti_affinity.aapp" => ANTI_AFFINITY_SCRIPT,
        "app.aapp" => APP_SCRIPT,
        other => return Err(format!("no bundled file `{other}`")),
    };
    Ok(text.to_owned())
}

pub fn policy_script(name: &str) -> Option<AappScript> {
    let text = match name {
        "aapp" => AAPP_SCRIPT,
        "anti_affinity" => ANTI_AFFINITY_SCRIPT,
        "app" => APP_SCRIPT,
        _ => return None,
    };
    Some(parse_script(text).expect("bundled scripts parse"))
}

/// All bundled policies, named.
pub fn policies() -> Vec<(String, AappScript)> {
    POLICIES
        .iter()
        .map(|n| (n.to_string(), policy_script(n).unwrap()))
        .collect()
}

/// The divide/impera experiment under the `aapp` policy.
pub fn divide_impera() -> SimConfig {
    SimConfig::from_yaml(DIVIDE_IMPERA_SIM, &bundled_file).expect("bundled scenario is valid")
}

/// The same cluster and policies with zero service times and many runs, to
/// estimate placement probabilities. Heavy functions outlive every divide of
/// their run.
pub fn placement_probability(runs: u32, seed: u64) -> SimConfig {
    let mut cfg = divide_impera();
    cfg.workload.runs = runs;
    cfg.workload.timing = Timing::zero();
    for h in &mut cfg.workload.heavy {
        h.duration_ms = 10_000_000;
    }
    cfg.seed = seed;
    cfg
}

/// `policy` applied to the divide/impera experiment.
pub fn divide_impera_with(policy: &str) -> Result<SimConfig, SimError> {
    let script = policy_script(policy)
        .ok_or_else(|| SimError::Config(format!("unknown policy `{policy}`")))?;
    Ok(SimConfig {
        script,
        ..divide_impera()
    })
}

pub fn zoned_cluster() -> ClusterConfig {
    ClusterConfig::from_yaml(ZONED_CLUSTER).expect("bundled cluster")
}

pub fn tiered_cluster() -> ClusterConfig {
    ClusterConfig::from_yaml(TIERED_CLUSTER).expect("bundled cluster")
}

pub fn tiered_registry() -> Registry {
    Registry::from_yaml(TIERED_REGISTRY).expect("bundled registry")
}
