use std::collections::{BTreeMap, BTreeSet, HashMap};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ClusterConfig, ConfigError, Registry};
use crate::ids::{ActivationId, FunctionId, TagId, WorkerId};

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum StateError {
    #[error("activation `{0}` is already live")]
    DuplicateActivation(ActivationId),
    #[error("unknown worker `{0}`")]
    UnknownWorker(WorkerId),
    #[error("unknown function `{0}`")]
    UnknownFunction(FunctionId),
    #[error("worker `{worker}` cannot host {requested} MB ({used}/{max} MB in use)")]
    CapacityExceeded {
        worker: WorkerId,
        requested: u64,
        used: u64,
        max: u64,
    },
    #[error("activation `{0}` is not live")]
    UnknownActivation(ActivationId),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Instance {
    pub activation: ActivationId,
    pub function: FunctionId,
    pub tag: TagId,
    #[serde(rename = "memory_mb")]
    pub memory: u64,
}

/// Live contents of one worker.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WorkerActivity {
    max_memory: u64,
    memory_used: u64,
    instances: BTreeMap<ActivationId, Instance>,
    tag_counts: BTreeMap<TagId, u32>,
}

impl WorkerActivity {
    fn new(max_memory: u64) -> Self {
        Self {
            max_memory,
            memory_used: 0,
            instances: BTreeMap::new(),
            tag_counts: BTreeMap::new(),
        }
    }

    pub fn max_memory(&self) -> u64 {
        self.max_memory
    }

    pub fn memory_used(&self) -> u64 {
        self.memory_used
    }

    pub fn instance_count(&self) -> usize {
        self.instances.len()
    }

    pub fn hosts_tag(&self, tag: &str) -> bool {
        self.tag_counts.contains_key(tag)
    }

    pub fn tags(&self) -> impl Iterator<Item = &TagId> {
        self.tag_counts.keys()
    }

    /// Number of live instances carrying `tag`.
    pub fn tag_count(&self, tag: &str) -> u32 {
        self.tag_counts.get(tag).copied().unwrap_or(0)
    }

    pub fn instances(&self) -> impl Iterator<Item = &Instance> {
        self.instances.values()
    }
}

/// The controller's live view: which instances run where.
///
/// `workers` holds the per-worker instance tables (keyed by activation, so
/// several instances of one function coexist) and `index` maps each live
/// activation back to its worker and function. Mutation is single-writer; a
/// shared borrow is a consistent snapshot.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActivityState {
    workers: IndexMap<WorkerId, WorkerActivity>,
    index: HashMap<ActivationId, (WorkerId, FunctionId)>,
}

/// Result of a successful completion.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Released {
    pub worker: WorkerId,
    pub instance: Instance,
}

impl ActivityState {
    pub fn new(config: &ClusterConfig) -> Self {
        Self {
            workers: config
                .iter()
                .map(|(id, spec)| (id.clone(), WorkerActivity::new(spec.max_memory)))
                .collect(),
            index: HashMap::new(),
        }
    }

    pub fn record_allocation(
        &mut self,
        worker: &str,
        activation: ActivationId,
        function: &str,
        reg: &Registry,
    ) -> Result<(), StateError> {
        if self.index.contains_key(&activation) {
            return Err(StateError::DuplicateActivation(activation));
        }
        let meta = reg
            .get(function)
            .ok_or_else(|| StateError::UnknownFunction(function.into()))?;
        let (worker_id, slot) = self
            .workers
            .get_key_value_mut(worker)
            .ok_or_else(|| StateError::UnknownWorker(worker.into()))?;
        if slot.memory_used + meta.memory > slot.max_memory {
            return Err(StateError::CapacityExceeded {
                worker: worker_id.clone(),
                requested: meta.memory,
                used: slot.memory_used,
                max: slot.max_memory,
            });
        }
        slot.memory_used += meta.memory;
        *slot.tag_counts.entry(meta.tag.clone()).or_insert(0) += 1;
        slot.instances.insert(
            activation.clone(),
            Instance {
                activation: activation.clone(),
                function: meta.name.clone(),
                tag: meta.tag.clone(),
                memory: meta.memory,
            },
        );
        self.index
            .insert(activation, (worker_id.clone(), meta.name.clone()));
        Ok(())
    }

    pub fn record_completion(&mut self, activation: &str) -> Result<Released, StateError> {
        let (worker, _) = self
            .index
            .remove(activation)
            .ok_or_else(|| StateError::UnknownActivation(activation.into()))?;
        let slot = self
            .workers
            .get_mut(&worker)
            .expect("index only references configured workers");
        let instance = slot
            .instances
            .remove(activation)
            .expect("index and worker tables agree");
        slot.memory_used -= instance.memory;
        match slot.tag_counts.get_mut(&instance.tag) {
            Some(n) if *n > 1 => *n -= 1,
            _ => {
                slot.tag_counts.remove(&instance.tag);
            }
        }
        Ok(Released { worker, instance })
    }

    pub fn worker_tags(&self, worker: &str) -> Result<BTreeSet<TagId>, StateError> {
        self.workers
            .get(worker)
            .map(|w| w.tags().cloned().collect())
            .ok_or_else(|| StateError::UnknownWorker(worker.into()))
    }

    pub fn worker(&self, id: &str) -> Option<&WorkerActivity> {
        self.workers.get(id)
    }

    /// Worker by configuration position.
    pub fn worker_at(&self, index: usize) -> Option<(&WorkerId, &WorkerActivity)> {
        self.workers.get_index(index)
    }

    pub fn workers(&self) -> impl Iterator<Item = (&WorkerId, &WorkerActivity)> {
        self.workers.iter()
    }

    pub fn location_of(&self, activation: &str) -> Option<&(WorkerId, FunctionId)> {
        self.index.get(activation)
    }

    pub fn is_live(&self, activation: &str) -> bool {
        self.index.contains_key(activation)
    }

    pub fn live_count(&self) -> usize {
        self.index.len()
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            workers: self
                .workers
                .iter()
                .map(|(id, w)| WorkerSnapshot {
                    id: id.clone(),
                    max_memory: w.max_memory,
                    memory_used: w.memory_used,
                    tags: w.tags().cloned().collect(),
                    instances: w.instances().cloned().collect(),
                })
                .collect(),
        }
    }

    /// Recomputes both tables from scratch and reports the first mismatch:
    /// index/table bijection, per-worker memory sums, tag counts and capacity.
    pub fn verify(&self) -> Result<(), String> {
        let total: usize = self.workers.values().map(|w| w.instances.len()).sum();
        if total != self.index.len() {
            return Err(format!(
                "index holds {} activations but workers hold {total}",
                self.index.len()
            ));
        }
        for (id, w) in &self.workers {
            let mut mem = 0;
            let mut tags: BTreeMap<TagId, u32> = BTreeMap::new();
            for (act, inst) in &w.instances {
                match self.index.get(act) {
                    Some((wid, f)) if wid == id && *f == inst.function => {}
                    other => {
                        return Err(format!("activation `{act}` on `{id}` indexed as {other:?}"))
                    }
                }
                mem += inst.memory;
                *tags.entry(inst.tag.clone()).or_insert(0) += 1;
            }
            if mem != w.memory_used {
                return Err(format!(
                    "worker `{id}` caches {} MB but hosts {mem} MB",
                    w.memory_used
                ));
            }
            if mem > w.max_memory {
                return Err(format!("worker `{id}` over capacity"));
            }
            if tags != w.tag_counts {
                return Err(format!("worker `{id}` tag counts out of date"));
            }
        }
        Ok(())
    }

    /// Builds a state from a placements file: a list of
    /// `{worker, activation, function}` entries.
    pub fn from_placements_yaml(
        text: &str,
        config: &ClusterConfig,
        reg: &Registry,
    ) -> Result<Self, ConfigError> {
        let placements: Vec<Placement> = if text.trim().is_empty() {
            Vec::new()
        } else {
            serde_yaml::from_str(text)?
        };
        let mut state = Self::new(config);
        for p in placements {
            state
                .record_allocation(p.worker.as_str(), p.activation, p.function.as_str(), reg)
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        Ok(state)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub worker: WorkerId,
    pub activation: ActivationId,
    pub function: FunctionId,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct WorkerSnapshot {
    pub id: WorkerId,
    #[serde(rename = "max_memory_mb")]
    pub max_memory: u64,
    #[serde(rename = "memory_used_mb")]
    pub memory_used: u64,
    pub tags: BTreeSet<TagId>,
    pub instances: Vec<Instance>,
}

/// Owned, immutable copy of the live tables at one instant.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Snapshot {
    pub workers: Vec<WorkerSnapshot>,
}

impl Snapshot {
    pub fn instance_count(&self) -> usize {
        self.workers.iter().map(|w| w.instances.len()).sum()
    }
}
