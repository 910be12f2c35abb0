//! Random small scheduling instances shared by the property suites.

#![allow(dead_code)]

pub mod scripts;

use std::collections::HashMap;

use aapp_core::cluster::{ActivityState, ClusterConfig, Registry};
use aapp_core::dsl::{
    AappScript, AffinityConstraint, Block, Followup, InvalidateRule, Polarity, Strategy, TagPolicy,
    WorkerSet,
};
use aapp_core::scheduler::{valid, ScheduleError, Scheduler};
use rand::seq::SliceRandom;
use rand::Rng;

pub const TAGS: [&str; 4] = ["a", "b", "c", "default"];

#[derive(Debug, Clone)]
pub struct Instance {
    pub config: ClusterConfig,
    pub registry: Registry,
    pub script: AappScript,
    /// Live placements as (worker, function).
    pub placed: Vec<(String, String)>,
}

pub fn cluster<R: Rng>(rng: &mut R) -> ClusterConfig {
    let n = rng.gen_range(1..=5);
    let mut c = ClusterConfig::new();
    for i in 0..n {
        let mem = *[256u64, 512, 1000, 1024].choose(rng).unwrap();
        c = c.with(
            &format!("w{i}"),
            if i % 2 == 0 { "z0" } else { "z1" },
            mem,
            1.0,
        );
    }
    c
}

/// Functions `f_<tag>_<k>` for the first three tags, plus one with the
/// `default` tag and one with an unlisted tag.
pub fn registry<R: Rng>(rng: &mut R) -> Registry {
    let mut r = Registry::new();
    for tag in ["a", "b", "c", "default", "zz"] {
        for k in 0..2 {
            let mem = *[32u64, 64, 128, 300].choose(rng).unwrap();
            r = r.with(&format!("f_{tag}_{k}"), mem, tag);
        }
    }
    r
}

fn block<R: Rng>(rng: &mut R, n_workers: usize) -> Block {
    let workers = if rng.gen_bool(0.3) {
        WorkerSet::All
    } else {
        // may name a worker outside the configuration
        let mut ids: Vec<String> = (0..=n_workers).map(|i| format!("w{i}")).collect();
        ids.shuffle(rng);
        ids.truncate(rng.gen_range(1..=ids.len()));
        WorkerSet::List(ids.into_iter().map(Into::into).collect())
    };
    let mut b = Block::new(workers);
    b.strategy = if rng.gen_bool(0.5) {
        Strategy::Any
    } else {
        Strategy::BestFirst
    };
    if rng.gen_bool(0.4) {
        b.invalidate
            .push(InvalidateRule::CapacityUsed(rng.gen_range(1..=100)));
    }
    if rng.gen_bool(0.4) {
        b.invalidate.push(InvalidateRule::MaxConcurrentInvocations(
            rng.gen_range(1..=4),
        ));
    }
    let mut tags = TAGS[..3].to_vec();
    tags.shuffle(rng);
    for t in tags.into_iter().take(rng.gen_range(0..=2)) {
        b.affinity.push(if rng.gen_bool(0.5) {
            AffinityConstraint::affine(t)
        } else {
            AffinityConstraint::anti(t)
        });
    }
    b
}

pub fn script<R: Rng>(rng: &mut R, n_workers: usize) -> AappScript {
    let mut s = AappScript::default();
    let mut tags = TAGS.to_vec();
    tags.shuffle(rng);
    for t in tags.into_iter().take(rng.gen_range(1..=4)) {
        let blocks = (0..rng.gen_range(1..=3))
            .map(|_| block(rng, n_workers))
            .collect();
        let mut p = TagPolicy::new(t, blocks);
        if rng.gen_bool(0.3) {
            p = p.with_followup(Followup::Fail);
        }
        s.policies.insert(t.into(), p);
    }
    s
}

pub fn instance<R: Rng>(rng: &mut R) -> Instance {
    let config = cluster(rng);
    let registry = registry(rng);
    let script = script(rng, config.len());
    let mut placed = Vec::new();
    let mut used: Vec<u64> = vec![0; config.len()];
    let fns: Vec<String> = registry.iter().map(|m| m.name.to_string()).collect();
    for _ in 0..rng.gen_range(0..8) {
        let w = rng.gen_range(0..config.len());
        let f = fns.choose(rng).unwrap();
        let mem = registry.get(f).unwrap().memory;
        let (id, spec) = config.iter().nth(w).unwrap();
        if used[w] + mem <= spec.max_memory {
            used[w] += mem;
            placed.push((id.to_string(), f.clone()));
        }
    }
    Instance {
        config,
        registry,
        script,
        placed,
    }
}

/// Reference answer: the first block with a valid worker, its valid
/// workers in candidate order, and how many candidates were examined up to
/// and including it.
#[derive(Debug, PartialEq)]
pub enum Expected {
    Placed {
        block: usize,
        valid: Vec<String>,
        considered: usize,
    },
    NotSchedulable,
    UnknownTag,
}

pub fn reference(inst: &Instance, function: &str) -> Expected {
    let meta = inst.registry.get(function).unwrap();
    let tag = meta.tag.as_str();
    let default = inst.script.policies.get("default");
    let blocks: Vec<_> = match inst.script.policies.get(tag) {
        Some(p) => {
            let mut b: Vec<_> = p.blocks.iter().collect();
            if p.followup == Followup::Default && tag != "default" {
                b.extend(default.into_iter().flat_map(|d| d.blocks.iter()));
            }
            b
        }
        None => match default {
            Some(d) => d.blocks.iter().collect(),
            None => return Expected::UnknownTag,
        },
    };

    let mut considered = 0;
    for (k, block) in blocks.iter().enumerate() {
        let candidates: Vec<String> = match &block.workers {
            WorkerSet::All => inst.config.ids().map(|w| w.to_string()).collect(),
            WorkerSet::List(ws) => ws.iter().map(|w| w.to_string()).collect(),
        };
        considered += candidates.len();
        let mut valid = Vec::new();
        for w in candidates {
            let Some(spec) = inst.config.get(&w) else {
                continue;
            };
            let here: Vec<&str> = inst
                .placed
                .iter()
                .filter(|(pw, _)| *pw == w)
                .map(|(_, f)| f.as_str())
                .collect();
            let used: u64 = here
                .iter()
                .map(|f| inst.registry.get(f).unwrap().memory)
                .sum();
            let tags: Vec<&str> = here
                .iter()
                .map(|f| inst.registry.get(f).unwrap().tag.as_str())
                .collect();
            let mut ok = used + meta.memory <= spec.max_memory;
            for rule in &block.invalidate {
                ok &= match *rule {
                    InvalidateRule::CapacityUsed(t) => {
                        (used as f64) < spec.max_memory as f64 * f64::from(t) / 100.0
                    }
                    InvalidateRule::MaxConcurrentInvocations(n) => here.len() < n as usize,
                };
            }
            for c in &block.affinity {
                let present = tags.contains(&c.tag.as_str());
                ok &= match c.polarity {
                    Polarity::Affine => present,
                    Polarity::AntiAffine => !present,
                };
            }
            if ok {
                valid.push(w);
            }
        }
        if !valid.is_empty() {
            if block.strategy == Strategy::BestFirst {
                valid.truncate(1);
            }
            return Expected::Placed {
                block: k + 1,
                valid,
                considered,
            };
        }
    }
    Expected::NotSchedulable
}

/// Builds a random instance, asks the scheduler and compares with
/// [`reference`]. Returns which outcome was exercised (0 placed,
/// 1 not schedulable, 2 unknown tag).
pub fn check_instance<R: Rng>(rng: &mut R) -> Result<usize, String> {
    let inst = instance(rng);
    let mut state = ActivityState::new(&inst.config);
    for (i, (w, f)) in inst.placed.iter().enumerate() {
        state
            .record_allocation(w, format!("p{i}").into(), f, &inst.registry)
            .map_err(|e| e.to_string())?;
    }
    let fns: Vec<String> = inst.registry.iter().map(|m| m.name.to_string()).collect();
    let function = &fns[rng.gen_range(0..fns.len())];
    let expected = reference(&inst, function);
    let got =
        Scheduler::new(&inst.script, &inst.registry, &inst.config).schedule(function, &state, rng);
    let outcome = match (&expected, &got) {
        (
            Expected::Placed {
                block,
                valid,
                considered,
            },
            Ok(d),
        ) if d.block_index == *block
            && *considered == d.considered
            && valid.contains(&d.worker.to_string()) =>
        {
            0
        }
        (Expected::NotSchedulable, Err(ScheduleError::NotSchedulable { .. })) => 1,
        (Expected::UnknownTag, Err(ScheduleError::UnknownTag(_))) => 2,
        _ => {
            return Err(format!(
                "function {function}\n{inst:#?}\nexpected {expected:?}\ngot {got:?}"
            ))
        }
    };
    Ok(outcome)
}

/// Runs one random allocation/completion trace through the scheduler,
/// checking every placement post hoc and the tables after every step
/// against an independent ledger. Returns the number of placements.
pub fn check_trace<R: Rng>(rng: &mut R) -> Result<usize, String> {
    let config = cluster(rng);
    let registry = registry(rng);
    let script = script(rng, config.len());
    let sched = Scheduler::new(&script, &registry, &config);
    let fns: Vec<String> = registry.iter().map(|m| m.name.to_string()).collect();
    let mut state = ActivityState::new(&config);
    // activation -> (worker, memory)
    let mut live: HashMap<String, (String, u64)> = HashMap::new();
    let mut placements = 0;
    for step in 0..rng.gen_range(5..40) {
        if !live.is_empty() && rng.gen_bool(0.35) {
            let mut ids: Vec<&String> = live.keys().collect();
            ids.sort();
            let a = ids.choose(rng).unwrap().to_string();
            let released = state.record_completion(&a).map_err(|e| e.to_string())?;
            let (worker, _) = live.remove(&a).unwrap();
            if released.worker.as_str() != worker {
                return Err(format!(
                    "step {step}: {a} released from {} not {worker}",
                    released.worker
                ));
            }
        } else {
            let f = fns.choose(rng).unwrap();
            let meta = registry.get(f).unwrap();
            if let Ok(d) = sched.schedule(f, &state, rng) {
                let block = sched.blocks_for(&meta.tag).unwrap()[d.block_index - 1];
                if !valid(f, d.worker.as_str(), &state, &registry, &config, block) {
                    return Err(format!(
                        "step {step}: {f} placed on {} violates block {}",
                        d.worker, d.block_index
                    ));
                }
                let a = format!("a{step}");
                state
                    .record_allocation(d.worker.as_str(), a.clone().into(), f, &registry)
                    .map_err(|e| format!("step {step}: {e}"))?;
                live.insert(a, (d.worker.to_string(), meta.memory));
                placements += 1;
            }
        }
        state.verify().map_err(|e| format!("step {step}: {e}"))?;
        for (id, spec) in config.iter() {
            let w = state.worker(id.as_str()).unwrap();
            let expect: u64 = live
                .values()
                .filter(|(lw, _)| lw == id.as_str())
                .map(|(_, m)| m)
                .sum();
            if w.memory_used() != expect || w.memory_used() > spec.max_memory {
                return Err(format!(
                    "step {step}: {id} uses {} MB, ledger says {expect}",
                    w.memory_used()
                ));
            }
        }
        if state.live_count() != live.len() {
            return Err(format!(
                "step {step}: {} live, ledger has {}",
                state.live_count(),
                live.len()
            ));
        }
    }
    Ok(placements)
}
