//! HTTP controller: schedules invocations on request and tracks them until
//! the caller reports completion.
//!
//! Every mutation goes through one lock, so the decision and the allocation
//! it implies happen as a single step. The order in which requests take the
//! lock is recorded in a decision log that can be replayed offline.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, MutexGuard};

use aapp_core::cluster::{ActivityState, ClusterConfig, Registry, Snapshot, StateError};
use aapp_core::dsl::{parse_script, AappScript};
use aapp_core::scheduler::{BlockRejection, ScheduleDecision, ScheduleError, Scheduler};
use aapp_core::{ActivationId, FunctionId, WorkerId};
use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    pub listen: SocketAddr,
    pub script: PathBuf,
    pub registry: PathBuf,
    pub cluster: PathBuf,
    pub seed: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum StartupError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleBody {
    pub function: String,
    pub activation: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompleteBody {
    pub activation: String,
}

/// One state change, in serialization order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum LogEntry {
    Schedule {
        function: FunctionId,
        activation: ActivationId,
        worker: WorkerId,
        block_index: usize,
    },
    Complete {
        activation: ActivationId,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub scheduled: u64,
    pub not_schedulable: u64,
    pub unknown_function: u64,
    pub duplicate_activation: u64,
    pub completed: u64,
    pub unknown_completion: u64,
    pub bad_request: u64,
    pub live: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("{0}")]
    NotSchedulable(String, Vec<BlockRejection>),
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
    #[error("activation `{0}` is already live")]
    DuplicateActivation(String),
    #[error("unknown activation `{0}`")]
    UnknownActivation(String),
    #[error("{0}")]
    BadRequest(String),
}

impl ServiceError {
    pub fn category(&self) -> &'static str {
        match self {
            ServiceError::NotSchedulable(..) => "NotSchedulable",
            ServiceError::UnknownFunction(_) => "UnknownFunction",
            ServiceError::DuplicateActivation(_) => "DuplicateActivation",
            ServiceError::UnknownActivation(_) => "UnknownActivation",
            ServiceError::BadRequest(_) => "BadRequest",
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::NotSchedulable(..) => StatusCode::CONFLICT,
            ServiceError::UnknownFunction(_) | ServiceError::UnknownActivation(_) => {
                StatusCode::NOT_FOUND
            }
            ServiceError::DuplicateActivation(_) | ServiceError::BadRequest(_) => {
                StatusCode::BAD_REQUEST
            }
        }
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: &'a str,
    detail: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    blocks: Option<&'a [BlockRejection]>,
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let blocks = match &self {
            ServiceError::NotSchedulable(_, b) => Some(b.as_slice()),
            _ => None,
        };
        let body = ErrorBody {
            error: self.category(),
            detail: self.to_string(),
            blocks,
        };
        (self.status(), Json(body)).into_response()
    }
}

struct Inner {
    state: ActivityState,
    rng: ChaCha8Rng,
    log: Vec<LogEntry>,
    counters: Counters,
}

/// Script, registry and cluster are fixed at construction; only the live
/// tables change.
pub struct Controller {
    script: AappScript,
    registry: Registry,
    config: ClusterConfig,
    seed: u64,
    inner: Mutex<Inner>,
}

impl Controller {
    pub fn new(script: AappScript, registry: Registry, config: ClusterConfig, seed: u64) -> Self {
        let inner = Inner {
            state: ActivityState::new(&config),
            rng: ChaCha8Rng::seed_from_u64(seed),
            log: Vec::new(),
            counters: Counters::default(),
        };
        Self {
            script,
            registry,
            config,
            seed,
            inner: Mutex::new(inner),
        }
    }

    pub fn from_files(cfg: &ServiceConfig) -> Result<Self, StartupError> {
        let read = |path: &PathBuf| {
            std::fs::read_to_string(path).map_err(|source| StartupError::Io {
                path: path.clone(),
                source,
            })
        };
        let invalid = |path: &PathBuf, message: String| StartupError::Invalid {
            path: path.clone(),
            message,
        };
        let script =
            parse_script(&read(&cfg.script)?).map_err(|e| invalid(&cfg.script, e.to_string()))?;
        let registry = Registry::from_yaml(&read(&cfg.registry)?)
            .map_err(|e| invalid(&cfg.registry, e.to_string()))?;
        let config = ClusterConfig::from_yaml(&read(&cfg.cluster)?)
            .map_err(|e| invalid(&cfg.cluster, e.to_string()))?;
        Ok(Self::new(script, registry, config, cfg.seed))
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn schedule(
        &self,
        function: &str,
        activation: &str,
    ) -> Result<ScheduleDecision, ServiceError> {
        let mut inner = self.lock();
        let inner = &mut *inner;
        if inner.state.is_live(activation) {
            inner.counters.duplicate_activation += 1;
            return Err(ServiceError::DuplicateActivation(activation.to_owned()));
        }
        let sched = Scheduler::new(&self.script, &self.registry, &self.config);
        let decision = match sched.schedule(function, &inner.state, &mut inner.rng) {
            Ok(d) => d,
            Err(ScheduleError::UnknownFunction(f)) => {
                inner.counters.unknown_function += 1;
                return Err(ServiceError::UnknownFunction(f.to_string()));
            }
            Err(e @ ScheduleError::UnknownTag(_)) => {
                inner.counters.not_schedulable += 1;
                return Err(ServiceError::NotSchedulable(e.to_string(), Vec::new()));
            }
            Err(e @ ScheduleError::NotSchedulable { .. }) => {
                inner.counters.not_schedulable += 1;
                let detail = e.to_string();
                let ScheduleError::NotSchedulable { blocks, .. } = e else {
                    unreachable!()
                };
                return Err(ServiceError::NotSchedulable(detail, blocks));
            }
        };
        inner
            .state
            .record_allocation(
                decision.worker.as_str(),
                activation.into(),
                function,
                &self.registry,
            )
            .expect("a valid worker has room for the function");
        inner.log.push(LogEntry::Schedule {
            function: function.into(),
            activation: activation.into(),
            worker: decision.worker.clone(),
            block_index: decision.block_index,
        });
        inner.counters.scheduled += 1;
        inner.counters.live += 1;
        Ok(decision)
    }

    pub fn complete(&self, activation: &str) -> Result<WorkerId, ServiceError> {
        let mut inner = self.lock();
        match inner.state.record_completion(activation) {
            Ok(released) => {
                inner.log.push(LogEntry::Complete {
                    activation: activation.into(),
                });
                inner.counters.completed += 1;
                inner.counters.live -= 1;
                Ok(released.worker)
            }
            Err(StateError::UnknownActivation(_)) => {
                inner.counters.unknown_completion += 1;
                Err(ServiceError::UnknownActivation(activation.to_owned()))
            }
            Err(e) => unreachable!("completion only fails on unknown ids: {e}"),
        }
    }

    pub fn snapshot(&self) -> Snapshot {
        self.lock().state.snapshot()
    }

    pub fn log(&self) -> Vec<LogEntry> {
        self.lock().log.clone()
    }

    pub fn counters(&self) -> Counters {
        self.lock().counters.clone()
    }

    pub fn count_bad_request(&self) {
        self.lock().counters.bad_request += 1;
    }

    /// Replays `log` serially through the scheduler from an empty cluster.
    pub fn replay(&self, log: &[LogEntry]) -> Result<ActivityState, ReplayError> {
        replay(log, &self.script, &self.registry, &self.config, self.seed)
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ReplayError {
    #[error("entry {index}: scheduler chose {replayed} but the log says {logged}")]
    Diverged {
        index: usize,
        logged: WorkerId,
        replayed: WorkerId,
    },
    #[error("entry {index}: {message}")]
    Rejected { index: usize, message: String },
}

/// Re-runs every logged decision with a fresh generator seeded like the
/// service's. Failed requests never draw from the generator, so the draws
/// line up with the successful schedules.
pub fn replay(
    log: &[LogEntry],
    script: &AappScript,
    registry: &Registry,
    config: &ClusterConfig,
    seed: u64,
) -> Result<ActivityState, ReplayError> {
    let sched = Scheduler::new(script, registry, config);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = ActivityState::new(config);
    for (index, entry) in log.iter().enumerate() {
        let rejected = |message: String| ReplayError::Rejected { index, message };
        match entry {
            LogEntry::Schedule {
                function,
                activation,
                worker,
                block_index,
            } => {
                let d = sched
                    .schedule(function.as_str(), &state, &mut rng)
                    .map_err(|e| rejected(e.to_string()))?;
                if d.worker != *worker || d.block_index != *block_index {
                    return Err(ReplayError::Diverged {
                        index,
                        logged: worker.clone(),
                        replayed: d.worker,
                    });
                }
                state
                    .record_allocation(
                        worker.as_str(),
                        activation.clone(),
                        function.as_str(),
                        registry,
                    )
                    .map_err(|e| rejected(e.to_string()))?;
            }
            LogEntry::Complete { activation } => {
                state
                    .record_completion(activation.as_str())
                    .map_err(|e| rejected(e.to_string()))?;
            }
        }
    }
    Ok(state)
}

#[derive(Serialize, Deserialize, Debug, PartialEq, Eq)]
pub struct Placed {
    pub worker: WorkerId,
    pub block_index: usize,
}

#[derive(Serialize, Deserialize, Debug, PartialEq, Eq)]
pub struct Completed {
    pub worker: WorkerId,
}

fn parse_body<T: serde::de::DeserializeOwned>(
    ctl: &Controller,
    body: &[u8],
) -> Result<T, ServiceError> {
    serde_json::from_slice(body).map_err(|e| {
        ctl.count_bad_request();
        ServiceError::BadRequest(e.to_string())
    })
}

async fn schedule_handler(
    State(ctl): State<Arc<Controller>>,
    body: Bytes,
) -> Result<Json<Placed>, ServiceError> {
    let req: ScheduleBody = parse_body(&ctl, &body)?;
    let d = ctl.schedule(&req.function, &req.activation)?;
    Ok(Json(Placed {
        worker: d.worker,
        block_index: d.block_index,
    }))
}

async fn complete_handler(
    State(ctl): State<Arc<Controller>>,
    body: Bytes,
) -> Result<Json<Completed>, ServiceError> {
    let req: CompleteBody = parse_body(&ctl, &body)?;
    let worker = ctl.complete(&req.activation)?;
    Ok(Json(Completed { worker }))
}

async fn state_handler(State(ctl): State<Arc<Controller>>) -> Json<Snapshot> {
    Json(ctl.snapshot())
}

async fn log_handler(State(ctl): State<Arc<Controller>>) -> Json<Vec<LogEntry>> {
    Json(ctl.log())
}

async fn metrics_handler(State(ctl): State<Arc<Controller>>) -> Json<Counters> {
    Json(ctl.counters())
}

async fn health_handler() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

pub fn router(ctl: Arc<Controller>) -> Router {
    Router::new()
        .route("/schedule", post(schedule_handler))
        .route("/complete", post(complete_handler))
        .route("/state", get(state_handler))
        .route("/log", get(log_handler))
        .route("/metrics", get(metrics_handler))
        .route("/health", get(health_handler))
        .with_state(ctl)
}

/// Binds `addr` and serves until the process receives Ctrl-C.
pub async fn serve(ctl: Arc<Controller>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(ctl))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
