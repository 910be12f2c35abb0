use std::collections::HashMap;

/// What a stored object is.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Object {
    /// Input chunk `part` written by divide `divide`.
    Chunk { divide: usize, part: u32 },
    /// Solution fragment `part` written by the impera for that chunk.
    Fragment { divide: usize, part: u32 },
}

/// Multi-zone store where a write is visible in its own zone immediately and
/// everywhere else after a fixed replication delay.
#[derive(Debug, Default)]
pub struct EventualStore {
    replication_delay: u64,
    writes: HashMap<Object, (usize, u64)>,
}

impl EventualStore {
    pub fn new(replication_delay: u64) -> Self {
        Self {
            replication_delay,
            writes: HashMap::new(),
        }
    }

    pub fn write(&mut self, key: Object, zone: usize, at: u64) {
        self.writes.insert(key, (zone, at));
    }

    pub fn visible(&self, key: &Object, zone: usize, at: u64) -> bool {
        match self.writes.get(key) {
            Some(&(z, t)) if z == zone => at >= t,
            Some(&(_, t)) => at >= t + self.replication_delay,
            None => false,
        }
    }
}
