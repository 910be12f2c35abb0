//! Event loop of the divide/impera simulation.
//!
//! A divide is placed, runs its split phase, writes one chunk per impera to
//! its zone's store and invokes the imperas through the controller. Each
//! impera reads its chunk from its own zone's store (retrying with
//! exponential backoff until replication catches up), computes, writes its
//! fragment locally and reports back. Once every impera has reported, the
//! divide reads the fragments from its own zone with the same retry
//! discipline, assembles and answers. Heavy functions are launched at the
//! start of every run and slow down everything sharing their worker.
//!
//! Messages between the controller and a worker pay the one-way zone
//! latency; the controller only learns about a completion (and releases the
//! instance) when the notification arrives.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::{Arrivals, SimConfig};
use super::metrics::{DivideRecord, Outcome, SimMetrics};
use super::storage::{EventualStore, Object};
use super::SimError;
use crate::cluster::ActivityState;
use crate::ids::{ActivationId, FunctionId, WorkerId};
use crate::scheduler::{check_worker, Scheduler};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Arrival,
    Placed,
    Started,
    StorageWrite,
    ReadAttempt(u32),
    ReadHit,
    ReadMiss,
    Completed,
    Rejected,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EventKind::Arrival => f.write_str("arrival"),
            EventKind::Placed => f.write_str("placed"),
            EventKind::Started => f.write_str("started"),
            EventKind::StorageWrite => f.write_str("storage_write"),
            EventKind::ReadAttempt(n) => write!(f, "read_attempt:{n}"),
            EventKind::ReadHit => f.write_str("read_hit"),
            EventKind::ReadMiss => f.write_str("read_miss"),
            EventKind::Completed => f.write_str("completed"),
            EventKind::Rejected => f.write_str("rejected"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SimEvent {
    pub time_ms: u64,
    pub kind: EventKind,
    pub activation: ActivationId,
    pub worker: Option<WorkerId>,
}

impl fmt::Display for SimEvent {
    /// `time_ms<TAB>kind<TAB>activation<TAB>worker`, `-` for no worker.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}\t{}\t{}\t{}",
            self.time_ms,
            self.kind,
            self.activation,
            self.worker.as_ref().map(|w| w.as_str()).unwrap_or("-")
        )
    }
}

/// Renders events one per line.
pub fn event_log(events: &[SimEvent]) -> String {
    let mut out = String::with_capacity(events.len() * 32);
    for e in events {
        out.push_str(&e.to_string());
        out.push('\n');
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimOutput {
    pub events: Vec<SimEvent>,
    pub metrics: SimMetrics,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Role {
    Heavy,
    Divide { record: usize },
    Impera { parent: usize, part: u32 },
}

#[derive(Debug)]
struct Proc {
    activation: ActivationId,
    function: FunctionId,
    role: Role,
    worker: Option<usize>,
    arrival: u64,
    base_ms: u64,
    children: Vec<usize>,
    pending_children: u32,
    pending_reads: u32,
    failed: bool,
    fast: bool,
}

#[derive(Clone, Copy, Debug)]
enum Action {
    StartRun(u32),
    Arrive(usize),
    Start(usize),
    Finish(usize),
    SplitDone(usize),
    Read {
        proc: usize,
        object: Object,
        attempt: u32,
    },
    ImperaDone(usize),
    Notify(usize),
    ChildResult {
        parent: usize,
        child: usize,
    },
}

struct Queued {
    time: u64,
    seq: u64,
    action: Action,
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        (self.time, self.seq) == (other.time, other.seq)
    }
}
impl Eq for Queued {}
impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Queued {
    // Min-heap on (time, seq).
    fn cmp(&self, other: &Self) -> Ordering {
        (other.time, other.seq).cmp(&(self.time, self.seq))
    }
}

#[derive(Default)]
struct RunState {
    index: u32,
    issued: u32,
    done: u32,
    heavies_pending: u32,
}

struct Engine<'a> {
    cfg: &'a SimConfig,
    sched: Scheduler<'a>,
    state: ActivityState,
    rng: ChaCha8Rng,
    store: EventualStore,
    queue: BinaryHeap<Queued>,
    seq: u64,
    now: u64,
    record_events: bool,
    events: Vec<SimEvent>,
    procs: Vec<Proc>,
    records: Vec<DivideRecord>,
    run: RunState,
    worker_zone: Vec<usize>,
    latency: Vec<Vec<u64>>,
    controller: usize,
    fast_zone: usize,
    heavy_fns: HashSet<FunctionId>,
    rejected_placements: usize,
    violations: usize,
}

/// Runs one simulation and returns the processed event sequence and metrics.
pub fn run_simulation(cfg: &SimConfig) -> Result<SimOutput, SimError> {
    run(cfg, true)
}

/// Like [`run_simulation`] but skips building the event list.
pub fn run_metrics(cfg: &SimConfig) -> Result<SimMetrics, SimError> {
    run(cfg, false).map(|o| o.metrics)
}

fn run(cfg: &SimConfig, record_events: bool) -> Result<SimOutput, SimError> {
    cfg.validate()?;
    let zones = cfg.cluster.zones();
    let zone_idx =
        |z: &crate::ids::ZoneId| zones.iter().position(|x| *x == z).expect("validated zone");
    let latency = zones
        .iter()
        .map(|a| {
            zones
                .iter()
                .map(|b| cfg.zone_latency.get(a, b).expect("validated latency"))
                .collect()
        })
        .collect();
    let mut engine = Engine {
        cfg,
        sched: Scheduler::new(&cfg.script, &cfg.registry, &cfg.cluster),
        state: ActivityState::new(&cfg.cluster),
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        store: EventualStore::new(cfg.storage.replication_delay_ms),
        queue: BinaryHeap::new(),
        seq: 0,
        now: 0,
        record_events,
        events: Vec::new(),
        procs: Vec::new(),
        records: Vec::new(),
        run: RunState::default(),
        worker_zone: cfg.cluster.iter().map(|(_, s)| zone_idx(&s.zone)).collect(),
        latency,
        controller: zone_idx(&cfg.controller_zone),
        fast_zone: zone_idx(cfg.fast_zone()),
        heavy_fns: cfg
            .workload
            .heavy
            .iter()
            .map(|h| h.function.clone())
            .collect(),
        rejected_placements: 0,
        violations: 0,
    };
    engine.push(0, Action::StartRun(0));
    while let Some(q) = engine.queue.pop() {
        debug_assert!(q.time >= engine.now);
        engine.now = q.time;
        engine.step(q.action);
    }
    Ok(engine.finish())
}

impl<'a> Engine<'a> {
    fn push(&mut self, time: u64, action: Action) {
        self.seq += 1;
        self.queue.push(Queued {
            time,
            seq: self.seq,
            action,
        });
    }

    fn log(&mut self, kind: EventKind, proc: usize) {
        if !self.record_events {
            return;
        }
        let p = &self.procs[proc];
        let worker = match kind {
            EventKind::Arrival | EventKind::Rejected => None,
            _ => p.worker.map(|w| self.worker_id(w).clone()),
        };
        self.events.push(SimEvent {
            time_ms: self.now,
            kind,
            activation: p.activation.clone(),
            worker,
        });
    }

    fn worker_id(&self, idx: usize) -> &'a WorkerId {
        self.cfg.cluster.iter().nth(idx).expect("worker index").0
    }

    fn zone_of(&self, proc: usize) -> usize {
        self.worker_zone[self.procs[proc].worker.expect("placed")]
    }

    fn to_controller(&self, proc: usize) -> u64 {
        self.latency[self.zone_of(proc)][self.controller]
    }

    fn controller_to(&self, proc: usize) -> u64 {
        self.latency[self.controller][self.zone_of(proc)]
    }

    fn heavy_count(&self, worker: usize, except: &ActivationId) -> i32 {
        let (_, activity) = self.state.worker_at(worker).expect("worker index");
        activity
            .instances()
            .filter(|i| &i.activation != except && self.heavy_fns.contains(&i.function))
            .count() as i32
    }

    /// Execution time of `base_ms` of work for `proc` on its worker now.
    fn service(&self, proc: usize, base_ms: u64) -> u64 {
        if base_ms == 0 {
            return 0;
        }
        let p = &self.procs[proc];
        let w = p.worker.expect("placed");
        let (_, spec) = self.cfg.cluster.iter().nth(w).expect("worker index");
        let slow = self
            .cfg
            .heavy_slowdown
            .powi(self.heavy_count(w, &p.activation));
        (base_ms as f64 / spec.cpu_weight * slow).round() as u64
    }

    fn spawn(
        &mut self,
        activation: String,
        function: &FunctionId,
        role: Role,
        base_ms: u64,
    ) -> usize {
        self.procs.push(Proc {
            activation: activation.into(),
            function: function.clone(),
            role,
            worker: None,
            arrival: 0,
            base_ms,
            children: Vec::new(),
            pending_children: 0,
            pending_reads: 0,
            failed: false,
            fast: false,
        });
        self.procs.len() - 1
    }

    fn issue_divide(&mut self, at: u64) {
        let run = self.run.index;
        let k = self.run.issued;
        self.run.issued += 1;
        let record = self.records.len();
        let activation = format!("r{run}-d{k}");
        self.records.push(DivideRecord {
            activation: activation.as_str().into(),
            run,
            arrival_ms: at,
            latency_ms: None,
            retries: 0,
            outcome: Outcome::Success,
            worker: None,
            zone: None,
            colocated: false,
            fast: false,
        });
        let f = self.cfg.workload.divide_function.clone();
        let p = self.spawn(activation, &f, Role::Divide { record }, 0);
        self.push(at, Action::Arrive(p));
    }

    fn step(&mut self, action: Action) {
        match action {
            Action::StartRun(run) => self.start_run(run),
            Action::Arrive(p) => self.arrive(p),
            Action::Start(p) => self.start(p),
            Action::Finish(p) => self.finish_proc(p),
            Action::SplitDone(p) => self.split_done(p),
            Action::Read {
                proc,
                object,
                attempt,
            } => self.read(proc, object, attempt),
            Action::ImperaDone(p) => {
                let Role::Impera { parent, part } = self.procs[p].role else {
                    unreachable!()
                };
                let zone = self.zone_of(p);
                self.store.write(
                    Object::Fragment {
                        divide: parent,
                        part,
                    },
                    zone,
                    self.now,
                );
                self.log(EventKind::StorageWrite, p);
                self.finish_proc(p);
            }
            Action::Notify(p) => self.notify(p),
            Action::ChildResult { parent, child } => self.child_result(parent, child),
        }
    }

    fn start_run(&mut self, run: u32) {
        self.run = RunState {
            index: run,
            heavies_pending: self.cfg.workload.heavy.len() as u32,
            ..Default::default()
        };
        for (j, h) in self.cfg.workload.heavy.iter().enumerate() {
            let p = self.spawn(
                format!("r{run}-h{j}"),
                &h.function,
                Role::Heavy,
                h.duration_ms,
            );
            self.push(self.now, Action::Arrive(p));
        }
        match self.cfg.workload.arrivals {
            Arrivals::Sequential => self.issue_divide(self.now),
            Arrivals::Open { interval_ms } => {
                for k in 0..self.cfg.workload.divides_per_run {
                    self.issue_divide(self.now + u64::from(k) * interval_ms);
                }
            }
        }
    }

    fn arrive(&mut self, p: usize) {
        self.procs[p].arrival = self.now;
        self.log(EventKind::Arrival, p);
        let function = self.procs[p].function.clone();
        match self
            .sched
            .schedule(function.as_str(), &self.state, &mut self.rng)
        {
            Ok(decision) => {
                let w = self
                    .cfg
                    .cluster
                    .index_of(decision.worker.as_str())
                    .expect("scheduler returns configured workers");
                let meta = self
                    .cfg
                    .registry
                    .get(function.as_str())
                    .expect("registered");
                let blocks = self.sched.blocks_for(&meta.tag).expect("tag resolved");
                let block = blocks[decision.block_index - 1];
                let activity = self.state.worker(decision.worker.as_str());
                if check_worker(
                    meta,
                    self.cfg.cluster.get(decision.worker.as_str()),
                    activity,
                    block,
                )
                .is_err()
                {
                    self.violations += 1;
                }
                let fast = self.worker_zone[w] == self.fast_zone
                    && self.heavy_count(w, &self.procs[p].activation) == 0;
                let activation = self.procs[p].activation.clone();
                if self
                    .state
                    .record_allocation(
                        decision.worker.as_str(),
                        activation,
                        function.as_str(),
                        &self.cfg.registry,
                    )
                    .is_err()
                {
                    self.violations += 1;
                    self.reject(p);
                    return;
                }
                self.procs[p].worker = Some(w);
                self.procs[p].fast = fast;
                self.log(EventKind::Placed, p);
                let at = self.now + self.controller_to(p);
                self.push(at, Action::Start(p));
            }
            Err(_) => self.reject(p),
        }
    }

    fn reject(&mut self, p: usize) {
        self.rejected_placements += 1;
        self.procs[p].failed = true;
        self.log(EventKind::Rejected, p);
        match self.procs[p].role {
            Role::Heavy => self.heavy_finished(),
            Role::Divide { record } => {
                self.records[record].outcome = Outcome::Rejected;
                self.divide_finished();
            }
            Role::Impera { parent, .. } => {
                let at = self.now + self.controller_to(parent);
                self.push(at, Action::ChildResult { parent, child: p });
            }
        }
    }

    fn start(&mut self, p: usize) {
        self.log(EventKind::Started, p);
        match self.procs[p].role {
            Role::Heavy => {
                let at = self.now + self.service(p, self.procs[p].base_ms);
                self.push(at, Action::Finish(p));
            }
            Role::Divide { .. } => {
                let at = self.now + self.service(p, self.cfg.workload.timing.divide_split_ms);
                self.push(at, Action::SplitDone(p));
            }
            Role::Impera { parent, part } => self.read(
                p,
                Object::Chunk {
                    divide: parent,
                    part,
                },
                1,
            ),
        }
    }

    fn split_done(&mut self, d: usize) {
        let n = self.cfg.workload.imperas_per_divide;
        let zone = self.zone_of(d);
        for part in 0..n {
            self.store
                .write(Object::Chunk { divide: d, part }, zone, self.now);
            self.log(EventKind::StorageWrite, d);
        }
        let f = self.cfg.workload.impera_function.clone();
        let at = self.now + self.to_controller(d);
        for part in 0..n {
            let name = format!("{}-i{part}", self.procs[d].activation);
            let c = self.spawn(name, &f, Role::Impera { parent: d, part }, 0);
            self.procs[d].children.push(c);
            self.push(at, Action::Arrive(c));
        }
        self.procs[d].pending_children = n;
    }

    fn record_of(&self, p: usize) -> usize {
        match self.procs[p].role {
            Role::Divide { record } => record,
            Role::Impera { parent, .. } => self.record_of(parent),
            Role::Heavy => unreachable!("heavy functions do not touch storage"),
        }
    }

    fn read(&mut self, p: usize, object: Object, attempt: u32) {
        self.log(EventKind::ReadAttempt(attempt), p);
        let zone = self.zone_of(p);
        if self.store.visible(&object, zone, self.now) {
            self.log(EventKind::ReadHit, p);
            self.read_done(p, true);
            return;
        }
        self.log(EventKind::ReadMiss, p);
        if attempt >= self.cfg.storage.backoff_max_attempts {
            self.read_done(p, false);
            return;
        }
        let record = self.record_of(p);
        self.records[record].retries += 1;
        let at = self.now + self.cfg.storage.backoff_after(attempt);
        self.push(
            at,
            Action::Read {
                proc: p,
                object,
                attempt: attempt + 1,
            },
        );
    }

    fn read_done(&mut self, p: usize, hit: bool) {
        match self.procs[p].role {
            Role::Impera { .. } => {
                if hit {
                    let at = self.now + self.service(p, self.cfg.workload.timing.impera_ms);
                    self.push(at, Action::ImperaDone(p));
                } else {
                    self.procs[p].failed = true;
                    self.finish_proc(p);
                }
            }
            Role::Divide { .. } => {
                if !hit {
                    self.procs[p].failed = true;
                }
                self.procs[p].pending_reads -= 1;
                if self.procs[p].pending_reads == 0 {
                    if self.procs[p].failed {
                        self.finish_proc(p);
                    } else {
                        let at =
                            self.now + self.service(p, self.cfg.workload.timing.divide_assemble_ms);
                        self.push(at, Action::Finish(p));
                    }
                }
            }
            Role::Heavy => unreachable!(),
        }
    }

    /// The function returns on its worker; the controller hears about it later.
    fn finish_proc(&mut self, p: usize) {
        let at = self.now + self.to_controller(p);
        self.push(at, Action::Notify(p));
    }

    fn notify(&mut self, p: usize) {
        self.log(EventKind::Completed, p);
        let activation = self.procs[p].activation.clone();
        self.state
            .record_completion(activation.as_str())
            .expect("each placed activation completes once");
        match self.procs[p].role {
            Role::Heavy => self.heavy_finished(),
            Role::Impera { parent, .. } => {
                let at = self.now + self.controller_to(parent);
                self.push(at, Action::ChildResult { parent, child: p });
            }
            Role::Divide { record } => {
                let r = &mut self.records[record];
                r.latency_ms = Some(self.now - r.arrival_ms);
                if self.procs[p].failed {
                    r.outcome = Outcome::Failed;
                }
                self.divide_finished();
            }
        }
    }

    fn child_result(&mut self, d: usize, child: usize) {
        if self.procs[child].failed {
            self.procs[d].failed = true;
        }
        self.procs[d].pending_children -= 1;
        if self.procs[d].pending_children > 0 {
            return;
        }
        if self.procs[d].failed {
            self.finish_proc(d);
            return;
        }
        let n = self.cfg.workload.imperas_per_divide;
        self.procs[d].pending_reads = n;
        for part in 0..n {
            self.push(
                self.now,
                Action::Read {
                    proc: d,
                    object: Object::Fragment { divide: d, part },
                    attempt: 1,
                },
            );
        }
    }

    fn divide_finished(&mut self) {
        self.run.done += 1;
        let per_run = self.cfg.workload.divides_per_run;
        if self.cfg.workload.arrivals == Arrivals::Sequential && self.run.issued < per_run {
            self.issue_divide(self.now);
        }
        self.maybe_end_run();
    }

    fn heavy_finished(&mut self) {
        self.run.heavies_pending -= 1;
        self.maybe_end_run();
    }

    fn maybe_end_run(&mut self) {
        if self.run.done == self.cfg.workload.divides_per_run
            && self.run.heavies_pending == 0
            && self.run.index + 1 < self.cfg.workload.runs
        {
            self.push(self.now, Action::StartRun(self.run.index + 1));
        }
    }

    fn finish(mut self) -> SimOutput {
        for p in &self.procs {
            let Role::Divide { record } = p.role else {
                continue;
            };
            let r = &mut self.records[record];
            let Some(w) = p.worker else { continue };
            let (wid, spec) = self.cfg.cluster.iter().nth(w).expect("worker index");
            r.worker = Some(wid.clone());
            r.zone = Some(spec.zone.clone());
            let children: Vec<&Proc> = p.children.iter().map(|&c| &self.procs[c]).collect();
            let all_placed = !children.is_empty() && children.iter().all(|c| c.worker.is_some());
            r.colocated = all_placed && children.iter().all(|c| c.worker == Some(w));
            r.fast = all_placed && p.fast && children.iter().all(|c| c.fast);
        }
        let fast_zone = self.cfg.fast_zone();
        SimOutput {
            events: self.events,
            metrics: SimMetrics::from_records(
                self.records,
                fast_zone,
                self.rejected_placements,
                self.violations,
            ),
        }
    }
}
