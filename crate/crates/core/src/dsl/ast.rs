use indexmap::IndexMap;
use serde::Serialize;

use crate::ids::{TagId, WorkerId};

/// Source position (1-based). Positions are carried for diagnostics only and
/// never take part in structural equality.
#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct Location {
    pub line: usize,
    pub column: usize,
}

impl Location {
    pub fn new(line: usize, column: usize) -> Self {
        Self { line, column }
    }
}

impl PartialEq for Location {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl Eq for Location {}

/// A parsed policy document: tag policies in document order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct AappScript {
    pub policies: IndexMap<TagId, TagPolicy>,
}

impl AappScript {
    pub fn policy(&self, tag: &str) -> Option<&TagPolicy> {
        self.policies.get(tag)
    }

    pub fn default_policy(&self) -> Option<&TagPolicy> {
        self.policies.get(TagId::DEFAULT)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Followup {
    Default,
    Fail,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TagPolicy {
    pub tag: TagId,
    pub blocks: Vec<Block>,
    /// Effective followup; `Default` when the clause is omitted.
    pub followup: Followup,
    /// Whether the document spelled out the followup clause.
    pub followup_declared: bool,
    #[serde(skip)]
    pub at: Location,
}

impl TagPolicy {
    pub fn new(tag: impl Into<TagId>, blocks: Vec<Block>) -> Self {
        Self {
            tag: tag.into(),
            blocks,
            followup: Followup::Default,
            followup_declared: false,
            at: Location::default(),
        }
    }

    pub fn with_followup(mut self, followup: Followup) -> Self {
        self.followup = followup;
        self.followup_declared = true;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum WorkerSet {
    /// `*`: every configured worker, in configuration order.
    All,
    List(Vec<WorkerId>),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub enum Strategy {
    Any,
    #[default]
    BestFirst,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum InvalidateRule {
    /// Invalidate once memory occupancy reaches this percentage (1..=100).
    CapacityUsed(u8),
    /// Invalidate once the worker hosts this many instances.
    MaxConcurrentInvocations(u32),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Polarity {
    Affine,
    AntiAffine,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AffinityConstraint {
    pub tag: TagId,
    pub polarity: Polarity,
}

impl AffinityConstraint {
    pub fn affine(tag: impl Into<TagId>) -> Self {
        Self {
            tag: tag.into(),
            polarity: Polarity::Affine,
        }
    }

    pub fn anti(tag: impl Into<TagId>) -> Self {
        Self {
            tag: tag.into(),
            polarity: Polarity::AntiAffine,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Block {
    pub workers: WorkerSet,
    pub strategy: Strategy,
    pub invalidate: Vec<InvalidateRule>,
    pub affinity: Vec<AffinityConstraint>,
    #[serde(skip)]
    pub at: Location,
}

impl Block {
    pub fn new(workers: WorkerSet) -> Self {
        Self {
            workers,
            strategy: Strategy::default(),
            invalidate: Vec::new(),
            affinity: Vec::new(),
            at: Location::default(),
        }
    }

    pub fn capacity_threshold(&self) -> Option<u8> {
        self.invalidate.iter().find_map(|r| match r {
            InvalidateRule::CapacityUsed(t) => Some(*t),
            _ => None,
        })
    }

    pub fn concurrency_limit(&self) -> Option<u32> {
        self.invalidate.iter().find_map(|r| match r {
            InvalidateRule::MaxConcurrentInvocations(n) => Some(*n),
            _ => None,
        })
    }
}
