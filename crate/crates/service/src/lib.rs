//! Session-oriented HTTP API: load a scenario or an uploaded network, stream
//! findings into it, and query timelines, posteriors, decisions and VOI.
//!
//! Each session keeps an immutable snapshot that queries read while a
//! mutation, serialized per session, prepares the next one. With a data
//! directory every session is persisted as its source reference plus an
//! append-only JSONL audit log and replayed on startup.

mod error;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::io::AsyncWriteExt;
use tokio::sync::{Mutex, OnceCell};

use ebn::model::{scenario, CompiledModel, Finding, Timeline, SCENARIOS};
use ebn::session::{LogEntry, PosteriorView, Session, SessionSource, Stamped};
use ebn::decide::{UtilityResult, VoiResult};

pub use error::ApiError;

type ApiResult<T> = Result<T, ApiError>;

struct SessionCell {
    /// Held for the whole of a mutation.
    write: Mutex<()>,
    snapshot: RwLock<Arc<Session>>,
}

impl SessionCell {
    fn new(s: Session) -> Self {
        Self {
            write: Mutex::new(()),
            snapshot: RwLock::new(Arc::new(s)),
        }
    }

    fn current(&self) -> Arc<Session> {
        self.snapshot.read().expect("snapshot lock").clone()
    }
}

pub struct AppState {
    dir: Option<PathBuf>,
    workers: Option<usize>,
    networks: Mutex<HashMap<String, Arc<OnceCell<Arc<CompiledModel>>>>>,
    sessions: RwLock<HashMap<String, Arc<SessionCell>>>,
}

impl AppState {
    /// In-memory state; nothing is persisted.
    pub fn new(workers: Option<usize>) -> Self {
        Self {
            dir: None,
            workers,
            networks: Mutex::new(HashMap::new()),
            sessions: RwLock::new(HashMap::new()),
        }
    }

    /// State persisted under `dir`; sessions found there are replayed.
    pub async fn open(dir: impl Into<PathBuf>, workers: Option<usize>) -> ApiResult<Self> {
        let dir = dir.into();
        tokio::fs::create_dir_all(dir.join("networks")).await.map_err(io)?;
        let mut state = Self::new(workers);
        state.dir = Some(dir.clone());
        let mut entries = tokio::fs::read_dir(&dir).await.map_err(io)?;
        let mut logs = Vec::new();
        while let Some(e) = entries.next_entry().await.map_err(io)? {
            let p = e.path();
            if p.extension().is_some_and(|x| x == "jsonl") {
                logs.push(p);
            }
        }
        logs.sort();
        for p in logs {
            let id = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            match state.restore(&id, &p).await {
                Ok(()) => tracing::info!(session = %id, "replayed"),
                Err(e) => tracing::warn!(session = %id, error = ?e, "session log not replayed"),
            }
        }
        Ok(state)
    }

    async fn restore(&self, id: &str, path: &Path) -> ApiResult<()> {
        let text = tokio::fs::read_to_string(path).await.map_err(io)?;
        let log = LogEntry::parse_lines(&text)?;
        let (source, hash) = match log.first().map(|e| &e.event) {
            Some(ebn::session::LogEvent::Created { source, model_hash, .. }) => (source.clone(), model_hash.clone()),
            _ => return Err(ApiError::Internal(format!("log of `{id}` does not start with its creation"))),
        };
        let model = self.network_for(&source, &hash).await?;
        let s = tokio::task::spawn_blocking({
            let id = id.to_string();
            move || Session::replay(id, model, &log)
        })
        .await
        .map_err(join)??;
        self.sessions
            .write()
            .expect("session table")
            .insert(id.to_string(), Arc::new(SessionCell::new(s)));
        Ok(())
    }

    async fn network_for(&self, source: &SessionSource, model_hash: &str) -> ApiResult<Arc<CompiledModel>> {
        match source {
            SessionSource::Scenario { name } => self.scenario_network(name).await,
            SessionSource::Upload => {
                let key = format!("upload:{model_hash}");
                if let Some(cell) = self.networks.lock().await.get(&key) {
                    if let Some(m) = cell.get() {
                        return Ok(m.clone());
                    }
                }
                let dir = self
                    .dir
                    .as_ref()
                    .ok_or_else(|| ApiError::Internal("uploaded network is not available".into()))?;
                let text = tokio::fs::read_to_string(dir.join("networks").join(format!("{model_hash}.json")))
                    .await
                    .map_err(io)?;
                let m = Arc::new(CompiledModel::from_json(&text)?);
                self.networks
                    .lock()
                    .await
                    .insert(key, Arc::new(OnceCell::new_with(Some(m.clone()))));
                Ok(m)
            }
        }
    }

    /// Bundled scenario network, compiled once on first use.
    async fn scenario_network(&self, name: &str) -> ApiResult<Arc<CompiledModel>> {
        let sc = scenario(name).map_err(|_| ApiError::UnknownScenario(name.to_string()))?;
        let cell = self
            .networks
            .lock()
            .await
            .entry(format!("scenario:{name}"))
            .or_default()
            .clone();
        let workers = self.workers;
        let m = cell
            .get_or_try_init(|| async move {
                tokio::task::spawn_blocking(move || -> ebn::error::Result<_> {
                    Ok(Arc::new(sc.load()?.compile(workers)?))
                })
                .await
                .map_err(join)?
                .map_err(ApiError::from)
            })
            .await?;
        Ok(m.clone())
    }

    fn cell(&self, id: &str) -> ApiResult<Arc<SessionCell>> {
        self.sessions
            .read()
            .expect("session table")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::UnknownSession(id.to_string()))
    }

    fn log_path(&self, id: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{id}.jsonl")))
    }

    async fn append(&self, id: &str, entries: &[LogEntry]) -> ApiResult<()> {
        let Some(path) = self.log_path(id) else {
            return Ok(());
        };
        let mut f = tokio::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .await
            .map_err(io)?;
        let text: String = entries.iter().map(|e| e.to_line() + "\n").collect();
        f.write_all(text.as_bytes()).await.map_err(io)?;
        f.sync_data().await.map_err(io)
    }
}

fn io(e: std::io::Error) -> ApiError {
    ApiError::Core(e.into())
}

fn join(e: tokio::task::JoinError) -> ApiError {
    ApiError::Internal(format!("worker task failed: {e}"))
}

async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    F: FnOnce() -> ebn::error::Result<T> + Send + 'static,
    T: Send + 'static,
{
    Ok(tokio::task::spawn_blocking(f).await.map_err(join)??)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioInfo {
    pub name: String,
    pub summary: String,
    pub evidence: Vec<String>,
}

async fn list_scenarios() -> Json<Vec<ScenarioInfo>> {
    Json(
        SCENARIOS
            .iter()
            .map(|s| ScenarioInfo {
                name: s.name.into(),
                summary: s.summary.into(),
                evidence: s.evidence.iter().map(|(n, _)| n.to_string()).collect(),
            })
            .collect(),
    )
}

/// Either a bundled scenario name or a compiled network.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    #[serde(default)]
    pub scenario: Option<String>,
    #[serde(default)]
    pub network: Option<Box<CompiledModel>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionCreated {
    pub id: String,
    pub revision: u64,
    pub model: String,
    pub model_hash: String,
}

async fn create_session(
    State(state): State<Arc<AppState>>,
    Json(req): Json<CreateSession>,
) -> ApiResult<(StatusCode, Json<SessionCreated>)> {
    let (source, model) = match (req.scenario, req.network) {
        (Some(name), None) => {
            let m = state.scenario_network(&name).await?;
            (SessionSource::Scenario { name }, m)
        }
        (None, Some(net)) => {
            net.validate()?;
            let hash = net.model_hash.clone();
            if let Some(dir) = &state.dir {
                let path = dir.join("networks").join(format!("{hash}.json"));
                tokio::fs::write(&path, net.to_json()?).await.map_err(io)?;
            }
            let m: Arc<CompiledModel> = Arc::new(*net);
            state
                .networks
                .lock()
                .await
                .insert(format!("upload:{hash}"), Arc::new(OnceCell::new_with(Some(m.clone()))));
            (SessionSource::Upload, m)
        }
        _ => return Err(ApiError::BadRequest("give exactly one of `scenario` and `network`".into())),
    };
    let id = uuid::Uuid::new_v4().simple().to_string();
    let s = blocking({
        let id = id.clone();
        move || Session::new(id, source, model)
    })
    .await?;
    state.append(&id, s.log()).await?;
    let created = SessionCreated {
        id: id.clone(),
        revision: s.revision(),
        model: s.model().model.clone(),
        model_hash: s.model().model_hash.clone(),
    };
    state
        .sessions
        .write()
        .expect("session table")
        .insert(id, Arc::new(SessionCell::new(s)));
    Ok((StatusCode::CREATED, Json(created)))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvidenceRequest {
    #[serde(default)]
    pub findings: Vec<Finding>,
    #[serde(default)]
    pub expected_revision: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvidenceAccepted {
    pub revision: u64,
    pub evidence_probability: f64,
}

async fn add_evidence(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Json(req): Json<EvidenceRequest>,
) -> ApiResult<Json<EvidenceAccepted>> {
    let cell = state.cell(&id)?;
    let _guard = cell.write.lock().await;
    let current = cell.current();
    let before = current.log().len();
    let next = blocking(move || {
        let mut s = (*current).clone();
        s.add_evidence(&req.findings, req.expected_revision)?;
        Ok(s)
    })
    .await?;
    state.append(&id, &next.log()[before..]).await?;
    let out = EvidenceAccepted {
        revision: next.revision(),
        evidence_probability: next.evidence_probability(),
    };
    *cell.snapshot.write().expect("snapshot lock") = Arc::new(next);
    Ok(Json(out))
}

#[derive(Debug, Deserialize)]
struct TimelineParams {
    name: Option<String>,
    horizon: Option<usize>,
}

async fn get_timeline(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<TimelineParams>,
) -> ApiResult<Json<Stamped<Timeline>>> {
    let s = state.cell(&id)?.current();
    Ok(Json(blocking(move || s.timeline(q.name.as_deref(), q.horizon)).await?))
}

#[derive(Debug, Deserialize)]
struct PosteriorParams {
    node: String,
}

async fn get_posterior(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<PosteriorParams>,
) -> ApiResult<Json<Stamped<PosteriorView>>> {
    let s = state.cell(&id)?.current();
    Ok(Json(blocking(move || s.posterior(&q.node)).await?))
}

async fn get_decision(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<Json<Stamped<UtilityResult>>> {
    let s = state.cell(&id)?.current();
    Ok(Json(blocking(move || s.decision()).await?))
}

#[derive(Debug, Deserialize)]
struct VoiParams {
    sets: Option<String>,
}

/// `M4;M5;M4,M5`: sets separated by semicolons, members by commas.
pub fn parse_sets(text: &str) -> Vec<Vec<String>> {
    text.split(';')
        .map(|s| {
            s.split(',')
                .map(str::trim)
                .filter(|m| !m.is_empty())
                .map(String::from)
                .collect::<Vec<_>>()
        })
        .filter(|s| !s.is_empty())
        .collect()
}

async fn get_voi(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<VoiParams>,
) -> ApiResult<Json<Stamped<Vec<VoiResult>>>> {
    let s = state.cell(&id)?.current();
    let sets = q.sets.as_deref().map(parse_sets).unwrap_or_default();
    Ok(Json(blocking(move || s.voi(&sets)).await?))
}

async fn get_log(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Vec<LogEntry>>> {
    Ok(Json(state.cell(&id)?.current().log().to_vec()))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/scenarios", get(list_scenarios))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/evidence", post(add_evidence))
        .route("/sessions/{id}/timeline", get(get_timeline))
        .route("/sessions/{id}/posterior", get(get_posterior))
        .route("/sessions/{id}/decision", get(get_decision))
        .route("/sessions/{id}/voi", get(get_voi))
        .route("/sessions/{id}/log", get(get_log))
        .with_state(state)
}

pub async fn serve(addr: SocketAddr, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(%addr, "listening");
    axum::serve(listener, router(Arc::new(state))).await
}
