//! Worker selection for one invocation under a policy script.
//!
//! Blocks of the function's tag are tried in order, followed by the blocks
//! of the `default` policy unless the tag's followup is `fail`. The first
//! block with at least one valid worker decides: `best_first` takes the
//! first valid worker in block order, `any` draws uniformly among them.

use std::fmt;

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::cluster::{
    ActivityState, ClusterConfig, FunctionMeta, Registry, WorkerActivity, WorkerSpec,
};
use crate::dsl::{AappScript, Block, Followup, Polarity, Strategy, WorkerSet};
use crate::ids::{ActivationId, FunctionId, TagId, WorkerId};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ScheduleRequest {
    pub function: FunctionId,
    pub activation: ActivationId,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ScheduleDecision {
    pub worker: WorkerId,
    /// 1-based; blocks borrowed from the default policy are numbered after
    /// the tag's own blocks.
    pub block_index: usize,
    /// Number of (worker, block) validity checks performed.
    pub considered: usize,
}

/// Why a worker failed a block's validity check.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Violation<'a> {
    UnknownWorker,
    InsufficientMemory { needed: u64, free: u64 },
    CapacityThreshold { used: u64, max: u64, threshold: u8 },
    ConcurrencyLimit { hosted: usize, limit: u32 },
    MissingAffine(&'a TagId),
    AntiAffinePresent(&'a TagId),
}

impl fmt::Display for Violation<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::UnknownWorker => f.write_str("worker not in cluster configuration"),
            Violation::InsufficientMemory { needed, free } => {
                write!(f, "needs {needed} MB, {free} MB free")
            }
            Violation::CapacityThreshold {
                used,
                max,
                threshold,
            } => write!(f, "capacity used {used}/{max} MB reaches {threshold}%"),
            Violation::ConcurrencyLimit { hosted, limit } => {
                write!(f, "hosts {hosted} instances, limit {limit}")
            }
            Violation::MissingAffine(t) => write!(f, "no instance of affine tag `{t}`"),
            Violation::AntiAffinePresent(t) => write!(f, "hosts anti-affine tag `{t}`"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct WorkerRejection {
    pub worker: WorkerId,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BlockRejection {
    pub block_index: usize,
    pub workers: Vec<WorkerRejection>,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ScheduleError {
    #[error("function `{function}` is not schedulable")]
    NotSchedulable {
        function: FunctionId,
        blocks: Vec<BlockRejection>,
    },
    #[error("tag `{0}` has no policy and no default policy exists")]
    UnknownTag(TagId),
    #[error("unknown function `{0}`")]
    UnknownFunction(FunctionId),
}

/// Checks one worker against one block for a function with the given
/// registry entry.
///
/// The `capacity_used` threshold is a percentage of the worker's max memory:
/// occupancy at or above it invalidates. `max_concurrent_invocations n`
/// invalidates once `n` instances are hosted. Both boundaries are inclusive.
/// The function being placed does not count towards the worker's tags.
pub fn check_worker<'b>(
    meta: &FunctionMeta,
    spec: Option<&WorkerSpec>,
    activity: Option<&WorkerActivity>,
    block: &'b Block,
) -> Result<(), Violation<'b>> {
    let (Some(spec), Some(activity)) = (spec, activity) else {
        return Err(Violation::UnknownWorker);
    };
    let used = activity.memory_used();
    let max = spec.max_memory;
    if used + meta.memory > max {
        return Err(Violation::InsufficientMemory {
            needed: meta.memory,
            free: max.saturating_sub(used),
        });
    }
    if let Some(threshold) = block.capacity_threshold() {
        if 100 * used >= u64::from(threshold) * max {
            return Err(Violation::CapacityThreshold {
                used,
                max,
                threshold,
            });
        }
    }
    if let Some(limit) = block.concurrency_limit() {
        let hosted = activity.instance_count();
        if hosted >= limit as usize {
            return Err(Violation::ConcurrencyLimit { hosted, limit });
        }
    }
    for c in &block.affinity {
        let present = activity.hosts_tag(c.tag.as_str());
        match c.polarity {
            Polarity::Affine if !present => return Err(Violation::MissingAffine(&c.tag)),
            Polarity::AntiAffine if present => return Err(Violation::AntiAffinePresent(&c.tag)),
            _ => {}
        }
    }
    Ok(())
}

/// Whether `worker` may host `function` under `block`, given the live state.
pub fn valid(
    function: &str,
    worker: &str,
    state: &ActivityState,
    reg: &Registry,
    config: &ClusterConfig,
    block: &Block,
) -> bool {
    let Some(meta) = reg.get(function) else {
        return false;
    };
    check_worker(meta, config.get(worker), state.worker(worker), block).is_ok()
}

/// Immutable scheduling context: script, registry and cluster description.
#[derive(Clone, Copy)]
pub struct Scheduler<'a> {
    pub script: &'a AappScript,
    pub registry: &'a Registry,
    pub config: &'a ClusterConfig,
}

impl<'a> Scheduler<'a> {
    pub fn new(script: &'a AappScript, registry: &'a Registry, config: &'a ClusterConfig) -> Self {
        Self {
            script,
            registry,
            config,
        }
    }

    /// The ordered block list that applies to `tag`.
    pub fn blocks_for(&self, tag: &TagId) -> Result<Vec<&'a Block>, ScheduleError> {
        let default = self.script.default_policy();
        match self.script.policy(tag.as_str()) {
            Some(policy) => {
                let mut blocks: Vec<&Block> = policy.blocks.iter().collect();
                if policy.followup != Followup::Fail && !tag.is_default() {
                    if let Some(d) = default {
                        blocks.extend(d.blocks.iter());
                    }
                }
                Ok(blocks)
            }
            None => default
                .map(|d| d.blocks.iter().collect())
                .ok_or_else(|| ScheduleError::UnknownTag(tag.clone())),
        }
    }

    fn for_each_candidate<'s>(
        &self,
        block: &'a Block,
        state: &'s ActivityState,
        mut visit: impl FnMut(&'a WorkerId, Option<&'a WorkerSpec>, Option<&'s WorkerActivity>),
    ) {
        match &block.workers {
            WorkerSet::All => {
                for (i, (id, spec)) in self.config.iter().enumerate() {
                    let activity = match state.worker_at(i) {
                        Some((sid, a)) if sid == id => Some(a),
                        _ => state.worker(id.as_str()),
                    };
                    visit(id, Some(spec), activity);
                }
            }
            WorkerSet::List(ids) => {
                for id in ids {
                    visit(id, self.config.get(id.as_str()), state.worker(id.as_str()));
                }
            }
        }
    }

    pub fn schedule<R: Rng + ?Sized>(
        &self,
        function: &str,
        state: &ActivityState,
        rng: &mut R,
    ) -> Result<ScheduleDecision, ScheduleError> {
        let meta = self
            .registry
            .get(function)
            .ok_or_else(|| ScheduleError::UnknownFunction(function.into()))?;
        let blocks = self.blocks_for(&meta.tag)?;
        let mut considered = 0;
        let mut candidates: Vec<&WorkerId> = Vec::new();
        for (i, block) in blocks.iter().enumerate() {
            candidates.clear();
            self.for_each_candidate(block, state, |id, spec, activity| {
                considered += 1;
                if check_worker(meta, spec, activity, block).is_ok() {
                    candidates.push(id);
                }
            });
            if candidates.is_empty() {
                continue;
            }
            let pick = match block.strategy {
                Strategy::BestFirst => candidates[0],
                Strategy::Any => candidates[rng.gen_range(0..candidates.len())],
            };
            return Ok(ScheduleDecision {
                worker: pick.clone(),
                block_index: i + 1,
                considered,
            });
        }
        Err(ScheduleError::NotSchedulable {
            function: meta.name.clone(),
            blocks: self.explain(meta, &blocks, state),
        })
    }

    fn explain(
        &self,
        meta: &FunctionMeta,
        blocks: &[&'a Block],
        state: &ActivityState,
    ) -> Vec<BlockRejection> {
        blocks
            .iter()
            .enumerate()
            .map(|(i, block)| {
                let mut workers = Vec::new();
                self.for_each_candidate(block, state, |id, spec, activity| {
                    if let Err(v) = check_worker(meta, spec, activity, block) {
                        workers.push(WorkerRejection {
                            worker: id.clone(),
                            reason: v.to_string(),
                        });
                    }
                });
                BlockRejection {
                    block_index: i + 1,
                    workers,
                }
            })
            .collect()
    }
}

/// Free-function form of [`Scheduler::schedule`].
pub fn schedule<R: Rng + ?Sized>(
    function: &str,
    state: &ActivityState,
    script: &AappScript,
    reg: &Registry,
    config: &ClusterConfig,
    rng: &mut R,
) -> Result<ScheduleDecision, ScheduleError> {
    Scheduler::new(script, reg, config).schedule(function, state, rng)
}
