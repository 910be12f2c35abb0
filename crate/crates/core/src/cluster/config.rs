use std::collections::BTreeMap;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::ConfigError;
use crate::ids::{is_identifier, FunctionId, TagId, WorkerId, ZoneId};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionMeta {
    pub name: FunctionId,
    #[serde(rename = "memory_mb")]
    pub memory: u64,
    pub tag: TagId,
}

/// Function name to (memory, tag).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Registry {
    functions: BTreeMap<FunctionId, FunctionMeta>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, meta: FunctionMeta) -> Result<(), ConfigError> {
        if meta.memory == 0 {
            return Err(ConfigError::Invalid(format!(
                "function `{}` declares zero memory",
                meta.name
            )));
        }
        if self.functions.contains_key(&meta.name) {
            return Err(ConfigError::Invalid(format!(
                "function `{}` registered twice",
                meta.name
            )));
        }
        self.functions.insert(meta.name.clone(), meta);
        Ok(())
    }

    /// Convenience for tests and presets.
    pub fn with(mut self, name: &str, memory: u64, tag: &str) -> Self {
        self.insert(FunctionMeta {
            name: name.into(),
            memory,
            tag: tag.into(),
        })
        .expect("valid registry entry");
        self
    }

    pub fn get(&self, name: &str) -> Option<&FunctionMeta> {
        self.functions.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &FunctionMeta> {
        self.functions.values()
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    /// Parses a registry file: a list of `{name, memory_mb, tag}`.
    pub fn from_yaml(text: &str) -> Result<Self, ConfigError> {
        let entries: Vec<FunctionMeta> = serde_yaml::from_str(text)?;
        Self::from_entries(entries)
    }

    pub fn from_entries(entries: Vec<FunctionMeta>) -> Result<Self, ConfigError> {
        let mut reg = Self::new();
        for e in entries {
            reg.insert(e)?;
        }
        Ok(reg)
    }

    pub fn entries(&self) -> Vec<FunctionMeta> {
        self.functions.values().cloned().collect()
    }
}

fn default_cpu_weight() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkerSpec {
    pub zone: ZoneId,
    #[serde(rename = "max_memory_mb")]
    pub max_memory: u64,
    /// Relative CPU speed; only the simulator reads it.
    #[serde(default = "default_cpu_weight")]
    pub cpu_weight: f64,
}

#[derive(Deserialize, Serialize)]
pub struct WorkerEntry {
    pub id: WorkerId,
    #[serde(flatten)]
    pub spec: WorkerSpec,
}

/// Static worker descriptions in declaration order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ClusterConfig {
    workers: IndexMap<WorkerId, WorkerSpec>,
}

impl ClusterConfig {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_worker(
        &mut self,
        id: impl Into<WorkerId>,
        spec: WorkerSpec,
    ) -> Result<(), ConfigError> {
        let id = id.into();
        if !is_identifier(id.as_str()) {
            return Err(ConfigError::Invalid(format!(
                "`{id}` is not a valid worker id"
            )));
        }
        if spec.max_memory == 0 {
            return Err(ConfigError::Invalid(format!(
                "worker `{id}` has zero max memory"
            )));
        }
        if !(spec.cpu_weight.is_finite() && spec.cpu_weight > 0.0) {
            return Err(ConfigError::Invalid(format!(
                "worker `{id}` needs a positive cpu_weight"
            )));
        }
        if self.workers.contains_key(&id) {
            return Err(ConfigError::Invalid(format!(
                "worker `{id}` declared twice"
            )));
        }
        self.workers.insert(id, spec);
        Ok(())
    }

    /// Convenience for tests and presets.
    pub fn with(mut self, id: &str, zone: &str, max_memory: u64, cpu_weight: f64) -> Self {
        self.add_worker(
            id,
            WorkerSpec {
                zone: zone.into(),
                max_memory,
                cpu_weight,
            },
        )
        .expect("valid worker");
        self
    }

    pub fn contains(&self, id: &str) -> bool {
        self.workers.contains_key(id)
    }

    pub fn get(&self, id: &str) -> Option<&WorkerSpec> {
        self.workers.get(id)
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.workers.get_index_of(id)
    }

    /// Workers in declaration order.
    pub fn iter(&self) -> impl ExactSizeIterator<Item = (&WorkerId, &WorkerSpec)> {
        self.workers.iter()
    }

    pub fn ids(&self) -> impl ExactSizeIterator<Item = &WorkerId> {
        self.workers.keys()
    }

    pub fn len(&self) -> usize {
        self.workers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.workers.is_empty()
    }

    pub fn zones(&self) -> Vec<&ZoneId> {
        let mut zones: Vec<&ZoneId> = Vec::new();
        for spec in self.workers.values() {
            if !zones.contains(&&spec.zone) {
                zones.push(&spec.zone);
            }
        }
        zones
    }

    /// Parses a cluster file: a list of `{id, zone, max_memory_mb, cpu_weight?}`.
    pub fn from_yaml(text: &str) -> Result<Self, ConfigError> {
        let entries: Vec<WorkerEntry> = serde_yaml::from_str(text)?;
        Self::from_entries(entries)
    }

    pub fn from_entries(entries: Vec<WorkerEntry>) -> Result<Self, ConfigError> {
        let mut cfg = Self::new();
        for e in entries {
            cfg.add_worker(e.id, e.spec)?;
        }
        Ok(cfg)
    }

    pub fn entries(&self) -> Vec<WorkerEntry> {
        self.workers
            .iter()
            .map(|(id, spec)| WorkerEntry {
                id: id.clone(),
                spec: spec.clone(),
            })
            .collect()
    }
}
