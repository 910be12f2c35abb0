//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::net::SocketAddr;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use aapp_core::cluster::{ActivityState, ClusterConfig, Registry};
use aapp_core::dsl::{
    parse_script, AffinityConstraint, Followup, InvalidateRule, Strategy, WorkerSet,
};
use aapp_core::scenario;
use aapp_core::scheduler::{valid, ScheduleError, Scheduler};
use aapp_core::sim::{compare_policies, PolicyResult, Summary};
use aapp_service::{router, Controller, LogEntry};
use proptest::strategy::{Strategy as _, ValueTree};
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($fmt)+));
        }
    };
}

// Tolerances and sizes.
const PROB_RUNS: u32 = 2_000; // x 10 divides per run = 20,000 invocations
const PROB_SEED: u64 = 1;
const APP_FAST: (f64, f64) = (0.037, 0.005);
const ANTI_FAST: (f64, f64) = (0.125, 0.008);
const AAPP_EU: (f64, f64) = (0.50, 0.012);
const PROB_BUDGET: Duration = Duration::from_secs(60);
const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const ORACLE_INSTANCES: usize = 10_000;
const TRACES: usize = 10_000;
const LINEAR_SIZES: [usize; 4] = [10, 100, 1_000, 10_000];
const LINEAR_R2: f64 = 0.999;
const DECISION_BUDGET: Duration = Duration::from_millis(1);
const ROUND_TRIP_SCRIPTS: u32 = 1_000;
const STRESS_REQUESTS: usize = 5_000;

fn by_name<'a>(rows: &'a [PolicyResult], name: &str) -> &'a Summary {
    &rows
        .iter()
        .find(|r| r.name == name)
        .unwrap()
        .metrics
        .summary
}

fn within(x: f64, (target, tol): (f64, f64)) -> bool {
    (x - target).abs() <= tol
}

fn placement_probabilities() -> Outcome {
    let start = Instant::now();
    let cfg = scenario::placement_probability(PROB_RUNS, PROB_SEED);
    let rows = compare_policies(&cfg, &scenario::policies()).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let (app, anti, aapp) = (
        by_name(&rows, "app"),
        by_name(&rows, "anti_affinity"),
        by_name(&rows, "aapp"),
    );
    let detail = format!(
        "n={} fast app {:.4} anti {:.4}; aapp colocation {:.4} eu {:.4}; {:.1}s",
        app.invocations,
        app.fast_fraction,
        anti.fast_fraction,
        aapp.colocation_fraction,
        aapp.fast_zone_fraction,
        elapsed.as_secs_f64()
    );
    ensure!(
        rows.iter().all(|r| r.metrics.summary.invocations >= 20_000),
        "{detail}"
    );
    ensure!(within(app.fast_fraction, APP_FAST), "{detail}");
    ensure!(within(anti.fast_fraction, ANTI_FAST), "{detail}");
    ensure!(aapp.colocation_fraction == 1.0, "{detail}");
    ensure!(within(aapp.fast_zone_fraction, AAPP_EU), "{detail}");
    ensure!(elapsed < PROB_BUDGET, "{detail}");
    Ok(detail)
}

fn seeded_rows() -> Result<Vec<(u64, Vec<PolicyResult>)>, String> {
    SEEDS
        .iter()
        .map(|&seed| {
            let mut cfg = scenario::divide_impera();
            cfg.seed = seed;
            compare_policies(&cfg, &scenario::policies())
                .map(|rows| (seed, rows))
                .map_err(|e| e.to_string())
        })
        .collect()
}

fn retry_elimination(runs: &[(u64, Vec<PolicyResult>)]) -> Outcome {
    let mut detail = Vec::new();
    let mut bad = Vec::new();
    for (seed, rows) in runs {
        let r = |n| by_name(rows, n).total_retries;
        let (app, anti, aapp) = (r("app"), r("anti_affinity"), r("aapp"));
        detail.push(format!("seed {seed}: aapp {aapp} anti {anti} app {app}"));
        if aapp != 0 {
            bad.push(format!("seed {seed}: aapp retried {aapp} times"));
        }
        if !(aapp <= anti && anti < app) {
            bad.push(format!("seed {seed}: expected aapp <= anti < app"));
        }
    }
    let detail = detail.join("; ");
    ensure!(bad.is_empty(), "{}; {detail}", bad.join("; "));
    Ok(detail)
}

fn latency_ordering(runs: &[(u64, Vec<PolicyResult>)]) -> Outcome {
    let mut detail = Vec::new();
    for (seed, rows) in runs {
        let (app, anti, aapp) = (
            by_name(rows, "app"),
            by_name(rows, "anti_affinity"),
            by_name(rows, "aapp"),
        );
        let line = format!(
            "seed {seed}: mean {:.0}/{:.0}/{:.0} median {:.0}/{:.0}/{:.0} p95 {:.0}/{:.0}/{:.0}",
            aapp.mean_ms,
            anti.mean_ms,
            app.mean_ms,
            aapp.median_ms,
            anti.median_ms,
            app.median_ms,
            aapp.p95_ms,
            anti.p95_ms,
            app.p95_ms
        );
        for (what, a, b, c) in [
            ("mean", aapp.mean_ms, anti.mean_ms, app.mean_ms),
            ("median", aapp.median_ms, anti.median_ms, app.median_ms),
            ("p95", aapp.p95_ms, anti.p95_ms, app.p95_ms),
        ] {
            ensure!(a < b && b < c, "{what} out of order; {line}");
        }
        ensure!(
            aapp.colocation_fraction == 1.0,
            "aapp colocation {}; {line}",
            aapp.colocation_fraction
        );
        detail.push(line);
    }
    Ok(format!("aapp/anti/app ms; {}", detail.join("; ")))
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0a11);
    let mut outcomes = [0usize; 3];
    for n in 0..ORACLE_INSTANCES {
        let k = common::check_instance(&mut rng).map_err(|e| format!("instance {n}: {e}"))?;
        outcomes[k] += 1;
    }
    Ok(format!(
        "{ORACLE_INSTANCES} instances agree (placed {}, not schedulable {}, unknown tag {})",
        outcomes[0], outcomes[1], outcomes[2]
    ))
}

fn constraint_soundness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x50d);
    let mut placements = 0;
    for t in 0..TRACES {
        placements += common::check_trace(&mut rng).map_err(|e| format!("trace {t}: {e}"))?;
    }
    Ok(format!(
        "{TRACES} traces, {placements} placements, 0 violations"
    ))
}

fn directional_affinity() -> Outcome {
    let script = parse_script("- init:\n  - workers: *\n    affinity: '!query'\n- query:\n  - workers: *\n    affinity: init\n")
        .map_err(|e| e.to_string())?;
    let registry = Registry::new()
        .with("init_fn", 64, "init")
        .with("query_fn", 64, "query");
    let config = ClusterConfig::new().with("w", "z", 1024, 1.0);
    let sched = Scheduler::new(&script, &registry, &config);
    let mut state = ActivityState::new(&config);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let placed = |r: &Result<_, ScheduleError>| r.is_ok();

    ensure!(
        placed(&sched.schedule("init_fn", &state, &mut rng)),
        "init rejected on an empty worker"
    );
    ensure!(
        !placed(&sched.schedule("query_fn", &state, &mut rng)),
        "query placed on an empty worker"
    );
    state
        .record_allocation("w", "init-1".into(), "init_fn", &registry)
        .map_err(|e| e.to_string())?;
    let q = sched
        .schedule("query_fn", &state, &mut rng)
        .map_err(|e| format!("query after init: {e}"))?;
    ensure!(q.worker.as_str() == "w", "query went to {}", q.worker);
    state
        .record_allocation("w", "query-1".into(), "query_fn", &registry)
        .map_err(|e| e.to_string())?;
    ensure!(
        !placed(&sched.schedule("init_fn", &state, &mut rng)),
        "second init placed next to query"
    );
    Ok(
        "init on empty ok; query on empty rejected; query after init ok; second init rejected"
            .into(),
    )
}

fn linear_scheduling() -> Outcome {
    let script = parse_script(
        "- f:\n  - workers: *\n    invalidate:\n      - capacity_used 50%\n    affinity: '!h'\n  - workers: *\n    strategy: any\n",
    )
    .map_err(|e| e.to_string())?;
    let registry = Registry::new().with("f", 128, "f").with("h", 128, "h");
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut points = Vec::new();
    let mut median_at_1000 = Duration::ZERO;
    for &n in &LINEAR_SIZES {
        let mut config = ClusterConfig::new();
        for i in 0..n {
            config = config.with(&format!("w{i}"), "z", 1024, 1.0);
        }
        let sched = Scheduler::new(&script, &registry, &config);
        let mut total = 0usize;
        let mut times = Vec::new();
        const REQUESTS: usize = 51;
        for r in 0..REQUESTS {
            // a fresh random occupancy per request
            let mut state = ActivityState::new(&config);
            for (i, id) in config.ids().enumerate() {
                if rng.gen_bool(0.8) {
                    state
                        .record_allocation(id.as_str(), format!("h{r}-{i}").into(), "h", &registry)
                        .map_err(|e| e.to_string())?;
                }
            }
            let start = Instant::now();
            let d = sched
                .schedule("f", &state, &mut rng)
                .map_err(|e| e.to_string())?;
            times.push(start.elapsed());
            ensure!(
                d.considered <= 2 * n,
                "considered {} > {}",
                d.considered,
                2 * n
            );
            total += d.considered;
        }
        times.sort();
        if n == 1_000 {
            median_at_1000 = times[times.len() / 2];
        }
        points.push((n as f64, total as f64 / REQUESTS as f64));
    }
    let k = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / k;
    let my = points.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = points
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let ss_tot: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let r2 = 1.0 - ss_res / ss_tot;
    let detail = format!(
        "mean considered {:?}; R^2 {r2:.6}; median decision at 1000 workers {:?}",
        points.iter().map(|p| p.1).collect::<Vec<_>>(),
        median_at_1000
    );
    ensure!(r2 >= LINEAR_R2, "{detail}");
    ensure!(median_at_1000 < DECISION_BUDGET, "{detail}");
    Ok(detail)
}

fn parser_round_trip() -> Outcome {
    let zoned = parse_script(scenario::ZONED_SCRIPT).map_err(|e| e.to_string())?;
    let tags: Vec<&str> = zoned.policies.keys().map(|t| t.as_str()).collect();
    ensure!(tags == ["d", "i", "h"], "zoned example tags {tags:?}");
    let i = &zoned.policies["i"];
    ensure!(
        i.blocks.len() == 1
            && i.blocks[0].workers == WorkerSet::All
            && i.blocks[0].affinity
                == [
                    AffinityConstraint::anti("h"),
                    AffinityConstraint::affine("d")
                ],
        "zoned example `i` policy {i:?}"
    );
    let tiered = parse_script(scenario::TIERED_SCRIPT).map_err(|e| e.to_string())?;
    let f = &tiered.policies["f_tag"];
    let b1 = &f.blocks[0];
    ensure!(
        f.followup == Followup::Fail
            && f.blocks.len() == 2
            && b1.workers == WorkerSet::List(vec!["local_w1".into(), "local_w2".into()])
            && b1.strategy == Strategy::BestFirst
            && b1.invalidate == [InvalidateRule::CapacityUsed(80)]
            && b1.affinity
                == [
                    AffinityConstraint::affine("g_tag"),
                    AffinityConstraint::anti("h_tag")
                ]
            && f.blocks[1].workers == WorkerSet::List(vec!["public_w1".into()]),
        "tiered example policy {f:?}"
    );

    let mut runner = TestRunner::new(Config {
        rng_seed: proptest::test_runner::RngSeed::Fixed(11),
        ..Config::default()
    });
    let strategy = (common::scripts::script(), common::scripts::style());
    for n in 0..ROUND_TRIP_SCRIPTS {
        let (s, st) = strategy
            .new_tree(&mut runner)
            .map_err(|e| e.to_string())?
            .current();
        common::scripts::round_trip(&s, &st).map_err(|e| format!("script {n}: {e}"))?;
    }
    Ok(format!(
        "bundled examples parse as expected; {ROUND_TRIP_SCRIPTS} generated scripts round-trip"
    ))
}

const STRESS_SCRIPT: &str = "\
- d:
  - workers: *
    strategy: any
    affinity: '!h'
- i:
  - workers: *
    strategy: any
    invalidate:
      - max_concurrent_invocations 6
    affinity: ['!h', d]
- h:
  - workers: *
    invalidate:
      - capacity_used 60%
    affinity: ['!d', '!i']
";

async fn post(
    c: &reqwest::Client,
    addr: SocketAddr,
    path: &str,
    body: Value,
) -> Result<u16, String> {
    let r = c
        .post(format!("http://{addr}{path}"))
        .json(&body)
        .send()
        .await
        .map_err(|e| e.to_string())?;
    Ok(r.status().as_u16())
}

async fn get(c: &reqwest::Client, addr: SocketAddr, path: &str) -> Result<Value, String> {
    let r = c
        .get(format!("http://{addr}{path}"))
        .send()
        .await
        .map_err(|e| e.to_string())?;
    r.json().await.map_err(|e| e.to_string())
}

async fn stress() -> Outcome {
    let script = parse_script(STRESS_SCRIPT).map_err(|e| e.to_string())?;
    let config = ClusterConfig::new()
        .with("w1", "eu", 1024, 1.0)
        .with("w2", "eu", 1024, 1.0)
        .with("w3", "us", 2048, 1.0)
        .with("w4", "us", 512, 1.0);
    let registry = Registry::new()
        .with("divide", 128, "d")
        .with("impera", 64, "i")
        .with("heavy", 256, "h");
    let ctl = Arc::new(Controller::new(
        script.clone(),
        registry.clone(),
        config.clone(),
        2024,
    ));
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0")
        .await
        .map_err(|e| e.to_string())?;
    let addr = listener.local_addr().map_err(|e| e.to_string())?;
    let app = router(ctl.clone());
    tokio::spawn(async move { axum::serve(listener, app).await });

    const CLIENTS: usize = 50;
    let per_client = STRESS_REQUESTS.div_ceil(CLIENTS);
    let client = reqwest::Client::new();
    let tasks = (0..CLIENTS).map(|k| {
        let c = client.clone();
        tokio::spawn(async move {
            let mut mine: Vec<String> = Vec::new();
            let mut statuses = Vec::new();
            for n in 0..per_client {
                if n % 2 == 1 && !mine.is_empty() {
                    let a = mine.remove(0);
                    statuses.push(post(&c, addr, "/complete", json!({ "activation": a })).await?);
                } else {
                    let f = ["divide", "impera", "impera", "heavy"][(n + k) % 4];
                    let a = format!("c{k}-{n}");
                    let s = post(
                        &c,
                        addr,
                        "/schedule",
                        json!({ "function": f, "activation": a }),
                    )
                    .await?;
                    if s == 200 {
                        mine.push(a);
                    }
                    statuses.push(s);
                }
            }
            Ok::<_, String>(statuses)
        })
    });
    let mut statuses = Vec::new();
    for t in futures::future::join_all(tasks).await {
        statuses.extend(t.map_err(|e| e.to_string())??);
    }
    ensure!(
        statuses.len() >= STRESS_REQUESTS,
        "only {} requests",
        statuses.len()
    );
    ensure!(
        statuses.iter().all(|&s| s == 200 || s == 409),
        "unexpected status among {:?}",
        statuses
            .iter()
            .filter(|&&s| s != 200 && s != 409)
            .collect::<Vec<_>>()
    );

    let log: Vec<LogEntry> =
        serde_json::from_value(get(&client, addr, "/log").await?).map_err(|e| e.to_string())?;
    let served = get(&client, addr, "/state").await?;

    // post-hoc constraint check at each serialization point
    let sched = Scheduler::new(&script, &registry, &config);
    let mut shadow = ActivityState::new(&config);
    let mut violations = 0;
    for entry in &log {
        match entry {
            LogEntry::Schedule {
                function,
                activation,
                worker,
                block_index,
            } => {
                let tag = &registry.get(function.as_str()).unwrap().tag;
                let block = sched.blocks_for(tag).map_err(|e| e.to_string())?[block_index - 1];
                if !valid(
                    function.as_str(),
                    worker.as_str(),
                    &shadow,
                    &registry,
                    &config,
                    block,
                ) {
                    violations += 1;
                }
                shadow
                    .record_allocation(
                        worker.as_str(),
                        activation.clone(),
                        function.as_str(),
                        &registry,
                    )
                    .map_err(|e| e.to_string())?;
            }
            LogEntry::Complete { activation } => {
                shadow
                    .record_completion(activation.as_str())
                    .map_err(|e| e.to_string())?;
            }
        }
    }
    let replayed = ctl.replay(&log).map_err(|e| e.to_string())?;
    let replayed = serde_json::to_value(replayed.snapshot()).map_err(|e| e.to_string())?;
    let detail = format!(
        "{} requests ({} ok), {} log entries, {violations} violations",
        statuses.len(),
        statuses.iter().filter(|&&s| s == 200).count(),
        log.len()
    );
    ensure!(
        replayed == served,
        "replayed state differs from /state; {detail}"
    );
    ensure!(violations == 0, "{detail}");
    Ok(detail)
}

fn service_serializability() -> Outcome {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(8)
        .enable_all()
        .build()
        .map_err(|e| e.to_string())?;
    rt.block_on(stress())
}

fn main() -> ExitCode {
    let seeded = seeded_rows();
    let seeded_ref = seeded.as_deref().map_err(Clone::clone);
    let criteria: Vec<Criterion> = vec![
        ("placement probabilities", Box::new(placement_probabilities)),
        (
            "retry elimination",
            Box::new(|| retry_elimination(seeded_ref.clone()?)),
        ),
        (
            "latency ordering",
            Box::new(|| latency_ordering(seeded_ref.clone()?)),
        ),
        ("oracle equivalence", Box::new(oracle_equivalence)),
        ("constraint soundness", Box::new(constraint_soundness)),
        ("directional affinity", Box::new(directional_affinity)),
        ("linear-time scheduling", Box::new(linear_scheduling)),
        ("parser round-trip", Box::new(parser_round_trip)),
        ("service serializability", Box::new(service_serializability)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail})", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({detail})", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
