//! HTTP API over the estimator, the environment simulator and a flat-file
//! graph store.
//!
//! | route | |
//! |---|---|
//! | `POST /estimate` | graph document in, environment estimate out |
//! | `POST /simulate` | `{graph, cfg?}` in, job handle out |
//! | `GET /jobs/{id}` | job status and, once done, the simulation report |
//! | `GET /graphs/{name}`, `PUT /graphs/{name}` | stored graph documents |

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::Semaphore;
use tower_http::cors::CorsLayer;

use evac_core::envgraph::{validate, EnvironmentGraph};
use evac_core::estimator::{estimate_environment, EstimatorConfig, RoomModel};
use evac_core::harness::compare::simulation_report;
use evac_core::mlp::MlpModel;
use evac_core::sim::SimConfig;
use evac_core::SimError;

/// Directory for stored graphs when no flag is given.
pub const GRAPHS_DIR_ENV: &str = "EVAC_GRAPHS_DIR";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JobHandle {
    pub id: String,
    pub status: JobStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub struct ServiceConfig {
    pub model: Option<MlpModel>,
    pub graphs_dir: PathBuf,
    /// Simulation jobs running at once.
    pub workers: usize,
    pub estimator: EstimatorConfig,
}

pub struct AppState {
    model: Option<Arc<MlpModel>>,
    graphs_dir: PathBuf,
    estimator: EstimatorConfig,
    jobs: Mutex<HashMap<String, JobHandle>>,
    next_job: AtomicU64,
    workers: Arc<Semaphore>,
    graph_locks: Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>,
}

impl AppState {
    pub fn new(cfg: ServiceConfig) -> Arc<Self> {
        Arc::new(AppState {
            model: cfg.model.map(Arc::new),
            graphs_dir: cfg.graphs_dir,
            estimator: cfg.estimator,
            jobs: Mutex::new(HashMap::new()),
            next_job: AtomicU64::new(1),
            workers: Arc::new(Semaphore::new(cfg.workers.max(1))),
            graph_locks: Mutex::new(HashMap::new()),
        })
    }

    fn set_job(&self, job: JobHandle) {
        self.jobs.lock().unwrap().insert(job.id.clone(), job);
    }

    fn graph_lock(&self, name: &str) -> Arc<tokio::sync::Mutex<()>> {
        self.graph_locks.lock().unwrap().entry(name.to_string()).or_default().clone()
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/estimate", post(estimate))
        .route("/simulate", post(simulate))
        .route("/jobs/{id}", get(job))
        .route("/graphs/{name}", get(get_graph).put(put_graph))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

/// Binds `addr` and serves until the process is stopped.
pub async fn serve(addr: SocketAddr, state: Arc<AppState>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

/// Parses and validates a graph body; the error is a ready 400 response.
fn parse_graph(text: &str) -> Result<EnvironmentGraph, Response> {
    let graph = EnvironmentGraph::from_json(text).map_err(|e| error(StatusCode::BAD_REQUEST, e.to_string()))?;
    let violations = validate(&graph);
    if !violations.is_empty() {
        let messages: Vec<String> = violations.iter().map(ToString::to_string).collect();
        return Err((
            StatusCode::BAD_REQUEST,
            Json(json!({ "error": "invalid graph", "violations": violations, "messages": messages })),
        )
            .into_response());
    }
    Ok(graph)
}

fn body_text(body: &Bytes) -> Result<&str, Response> {
    std::str::from_utf8(body).map_err(|_| error(StatusCode::BAD_REQUEST, "body is not UTF-8"))
}

async fn estimate(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let graph = match body_text(&body).and_then(parse_graph) {
        Ok(g) => g,
        Err(r) => return r,
    };
    let Some(model) = state.model.clone() else {
        return error(StatusCode::UNPROCESSABLE_ENTITY, "no model loaded; start the service with --model");
    };
    match estimate_environment(&graph, model.as_ref(), None, &state.estimator) {
        Ok(est) => Json(est).into_response(),
        Err(e) => error(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()),
    }
}

#[derive(Deserialize)]
struct SimulateRequest {
    graph: Value,
    #[serde(default)]
    cfg: SimConfig,
}

async fn simulate(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let req: SimulateRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("expected {{graph, cfg?}}: {e}")),
    };
    let graph = match parse_graph(&req.graph.to_string()) {
        Ok(g) => g,
        Err(r) => return r,
    };
    if let Err(e) = req.cfg.validate() {
        return error(StatusCode::BAD_REQUEST, e.to_string());
    }
    let id = format!("job-{}", state.next_job.fetch_add(1, Ordering::Relaxed));
    let handle = JobHandle { id: id.clone(), status: JobStatus::Queued, result: None, error: None };
    state.set_job(handle.clone());

    let st = state.clone();
    tokio::spawn(async move {
        let _permit = st.workers.clone().acquire_owned().await.expect("worker pool open");
        st.set_job(JobHandle { id: id.clone(), status: JobStatus::Running, result: None, error: None });
        let model = st.model.clone();
        let est_cfg = st.estimator;
        let outcome = tokio::task::spawn_blocking(move || {
            simulation_report(&graph, &req.cfg, model.as_deref().map(|m| m as &dyn RoomModel), &est_cfg)
        })
        .await;
        let done = match outcome {
            Ok(Ok(report)) => JobHandle {
                id: id.clone(),
                status: JobStatus::Done,
                result: Some(serde_json::to_value(report).expect("report serializes")),
                error: None,
            },
            Ok(Err(e)) => {
                JobHandle { id: id.clone(), status: JobStatus::Failed, result: None, error: Some(e.to_string()) }
            }
            Err(e) => JobHandle {
                id: id.clone(),
                status: JobStatus::Failed,
                result: None,
                error: Some(format!("job panicked: {e}")),
            },
        };
        st.set_job(done);
    });
    (StatusCode::ACCEPTED, Json(handle)).into_response()
}

async fn job(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Response {
    match state.jobs.lock().unwrap().get(&id) {
        Some(job) => Json(job.clone()).into_response(),
        None => error(StatusCode::NOT_FOUND, format!("no job '{id}'")),
    }
}

fn valid_name(name: &str) -> bool {
    !name.is_empty() && name.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
}

fn graph_path(state: &AppState, name: &str) -> Result<PathBuf, Response> {
    if valid_name(name) {
        Ok(state.graphs_dir.join(format!("{name}.json")))
    } else {
        Err(error(StatusCode::BAD_REQUEST, format!("graph name '{name}' must match [A-Za-z0-9_-]+")))
    }
}

async fn get_graph(State(state): State<Arc<AppState>>, Path(name): Path<String>) -> Response {
    let path = match graph_path(&state, &name) {
        Ok(p) => p,
        Err(r) => return r,
    };
    match tokio::fs::read(&path).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, "application/json")], bytes).into_response(),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            error(StatusCode::NOT_FOUND, format!("no graph '{name}'"))
        }
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

async fn put_graph(State(state): State<Arc<AppState>>, Path(name): Path<String>, body: Bytes) -> Response {
    let path = match graph_path(&state, &name) {
        Ok(p) => p,
        Err(r) => return r,
    };
    if let Err(r) = body_text(&body).and_then(parse_graph) {
        return r;
    }
    let lock = state.graph_lock(&name);
    let _guard = lock.lock().await;
    let write = async {
        tokio::fs::create_dir_all(&state.graphs_dir).await?;
        let tmp = path.with_extension("json.partial");
        tokio::fs::write(&tmp, &body).await?;
        tokio::fs::rename(&tmp, &path).await
    };
    match write.await {
        Ok(()) => (StatusCode::OK, Json(json!({ "name": name, "bytes": body.len() }))).into_response(),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

/// Loads the model named on the command line, if any.
pub fn load_model(path: Option<&std::path::Path>) -> Result<Option<MlpModel>, SimError> {
    path.map(MlpModel::load).transpose()
}
