//! `aapp` command line.
//!
//! Exit codes: 0 success, 1 input or configuration error, 2 not schedulable.

use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use aapp_core::cluster::{ActivityState, ClusterConfig, Registry};
use aapp_core::dsl::{check_script, check_script_standalone, parse_script, AappScript, Level};
use aapp_core::scheduler::{schedule, ScheduleError};
use aapp_core::sim::{
    compare_policies, comparison_csv, comparison_series_csv, comparison_table, event_log,
    run_simulation, SimConfig,
};
use aapp_service::{Controller, ServiceConfig};
use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const EXIT_OK: u8 = 0;
pub const EXIT_INPUT: u8 = 1;
pub const EXIT_NOT_SCHEDULABLE: u8 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "aapp",
    version,
    about = "Affinity-aware function scheduling tools"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a policy script and lint it, optionally against a cluster.
    Check {
        #[arg(long)]
        script: PathBuf,
        #[arg(long)]
        cluster: Option<PathBuf>,
    },
    /// Make one scheduling decision against a recorded cluster state.
    Schedule {
        #[arg(long)]
        script: PathBuf,
        #[arg(long)]
        cluster: PathBuf,
        #[arg(long)]
        registry: PathBuf,
        #[arg(long)]
        state: PathBuf,
        #[arg(long)]
        function: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run one simulation and print its summary.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Tab-separated event log.
        #[arg(long)]
        events: Option<PathBuf>,
        /// Per-invocation CSV with an aggregate footer.
        #[arg(long)]
        metrics: Option<PathBuf>,
        /// Sorted latency series as `percentile,latency_ms`.
        #[arg(long)]
        series: Option<PathBuf>,
    },
    /// Run the same simulation under several scripts.
    Compare {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated script paths; each is named after its file stem.
        #[arg(long, value_delimiter = ',', required = true)]
        scripts: Vec<PathBuf>,
        /// Aggregate CSV, one row per script.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Latency series of every script as `policy,percentile,latency_ms`.
        #[arg(long)]
        series: Option<PathBuf>,
    },
    /// Run the scheduling controller over HTTP.
    Serve {
        #[arg(long)]
        script: PathBuf,
        #[arg(long)]
        registry: PathBuf,
        #[arg(long)]
        cluster: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        listen: SocketAddr,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// An error that ends the command with the given exit code.
struct Fail(u8, String);

fn input<E: std::fmt::Display>(context: impl std::fmt::Display) -> impl FnOnce(E) -> Fail {
    move |e| Fail(EXIT_INPUT, format!("{context}: {e}"))
}

fn read(path: &Path) -> Result<String, Fail> {
    fs::read_to_string(path).map_err(input(path.display()))
}

fn write(path: &Path, text: &str) -> Result<(), Fail> {
    fs::write(path, text).map_err(input(path.display()))
}

fn load_script(path: &Path) -> Result<AappScript, Fail> {
    parse_script(&read(path)?).map_err(input(path.display()))
}

fn load_cluster(path: &Path) -> Result<ClusterConfig, Fail> {
    ClusterConfig::from_yaml(&read(path)?).map_err(input(path.display()))
}

fn load_registry(path: &Path) -> Result<Registry, Fail> {
    Registry::from_yaml(&read(path)?).map_err(input(path.display()))
}

/// Loads a simulation file; paths inside it are relative to its directory.
fn load_sim(path: &Path) -> Result<SimConfig, Fail> {
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let resolve = |p: &str| fs::read_to_string(dir.join(p)).map_err(|e| e.to_string());
    SimConfig::from_yaml(&read(path)?, &resolve).map_err(input(path.display()))
}

pub fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> u8 {
    let result = match cli.command {
        Command::Check { script, cluster } => check(&script, cluster.as_deref(), err),
        Command::Schedule {
            script,
            cluster,
            registry,
            state,
            function,
            seed,
        } => schedule_once(
            &script, &cluster, &registry, &state, &function, seed, out, err,
        ),
        Command::Simulate {
            config,
            events,
            metrics,
            series,
        } => simulate(
            &config,
            events.as_deref(),
            metrics.as_deref(),
            series.as_deref(),
            out,
        ),
        Command::Compare {
            config,
            scripts,
            out: csv,
            series,
        } => compare(&config, &scripts, csv.as_deref(), series.as_deref(), out),
        Command::Serve {
            script,
            registry,
            cluster,
            listen,
            seed,
        } => serve(ServiceConfig {
            listen,
            script,
            registry,
            cluster,
            seed,
        }),
    };
    match result {
        Ok(code) => code,
        Err(Fail(code, message)) => {
            let _ = writeln!(err, "error: {message}");
            code
        }
    }
}

fn check(script: &Path, cluster: Option<&Path>, err: &mut dyn Write) -> Result<u8, Fail> {
    let text = read(script)?;
    let name = script.display().to_string();
    let parsed = match parse_script(&text) {
        Ok(s) => s,
        Err(e) => {
            let _ = writeln!(err, "ERROR {name}:{e}");
            return Ok(EXIT_INPUT);
        }
    };
    let diags = match cluster {
        Some(path) => check_script(&parsed, &load_cluster(path)?),
        None => check_script_standalone(&parsed),
    };
    for d in &diags {
        let _ = writeln!(err, "{}", d.render(&name));
    }
    let errors = diags.iter().any(|d| d.level == Level::Error);
    Ok(if errors { EXIT_INPUT } else { EXIT_OK })
}

#[allow(clippy::too_many_arguments)]
fn schedule_once(
    script: &Path,
    cluster: &Path,
    registry: &Path,
    state: &Path,
    function: &str,
    seed: u64,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<u8, Fail> {
    let script = load_script(script)?;
    let config = load_cluster(cluster)?;
    let reg = load_registry(registry)?;
    let live = ActivityState::from_placements_yaml(&read(state)?, &config, &reg)
        .map_err(input(state.display()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match schedule(function, &live, &script, &reg, &config, &mut rng) {
        Ok(d) => {
            let _ = writeln!(
                out,
                "worker={} block={} considered={}",
                d.worker, d.block_index, d.considered
            );
            Ok(EXIT_OK)
        }
        Err(ScheduleError::NotSchedulable { function, blocks }) => {
            let _ = writeln!(err, "not schedulable: {function}");
            for b in blocks {
                for w in b.workers {
                    let _ = writeln!(err, "  block {}: {}: {}", b.block_index, w.worker, w.reason);
                }
            }
            Ok(EXIT_NOT_SCHEDULABLE)
        }
        Err(e @ ScheduleError::UnknownTag(_)) => {
            let _ = writeln!(err, "not schedulable: {e}");
            Ok(EXIT_NOT_SCHEDULABLE)
        }
        Err(e @ ScheduleError::UnknownFunction(_)) => Err(Fail(EXIT_INPUT, e.to_string())),
    }
}

fn simulate(
    config: &Path,
    events: Option<&Path>,
    metrics: Option<&Path>,
    series: Option<&Path>,
    out: &mut dyn Write,
) -> Result<u8, Fail> {
    let cfg = load_sim(config)?;
    let result = run_simulation(&cfg).map_err(input(config.display()))?;
    if let Some(path) = events {
        write(path, &event_log(&result.events))?;
    }
    if let Some(path) = metrics {
        write(path, &result.metrics.to_csv())?;
    }
    if let Some(path) = series {
        write(path, &result.metrics.series_csv())?;
    }
    for (k, v) in result.metrics.summary.fields() {
        let _ = writeln!(out, "{k:<22} {v}");
    }
    Ok(EXIT_OK)
}

fn compare(
    config: &Path,
    scripts: &[PathBuf],
    csv: Option<&Path>,
    series: Option<&Path>,
    out: &mut dyn Write,
) -> Result<u8, Fail> {
    let cfg = load_sim(config)?;
    let mut named = Vec::new();
    for path in scripts {
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        named.push((name, load_script(path)?));
    }
    let rows = compare_policies(&cfg, &named).map_err(input(config.display()))?;
    if let Some(path) = csv {
        write(path, &comparison_csv(&rows))?;
    }
    if let Some(path) = series {
        write(path, &comparison_series_csv(&rows))?;
    }
    let _ = write!(out, "{}", comparison_table(&rows));
    Ok(EXIT_OK)
}

fn serve(cfg: ServiceConfig) -> Result<u8, Fail> {
    let ctl = Controller::from_files(&cfg).map_err(|e| Fail(EXIT_INPUT, e.to_string()))?;
    let runtime = tokio::runtime::Runtime::new().map_err(input("runtime"))?;
    runtime
        .block_on(aapp_service::serve(Arc::new(ctl), cfg.listen))
        .map_err(input(cfg.listen))?;
    Ok(EXIT_OK)
}
