//! HTTP API over query development sessions.
//!
//! Sessions are loaded lazily from the session store and cached; each one
//! sits behind its own mutex so mutations of one session are serialized
//! while different sessions proceed concurrently. The engine is shared
//! read-only.

mod error;

use std::collections::{BTreeSet, HashMap};
use std::future::Future;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{HeaderValue, StatusCode};
use axum::routing::{get, post};
use axum::{Json, Router};
use querybuilder_core::config::AppConfig;
use querybuilder_core::prob_ir::{FieldWeights, RankedList, WeightedQuery};
use querybuilder_core::session::{
    compute_stats, matched_terms, Judgment, MatchedTerms, SessionSnapshot, SessionStats,
};
use querybuilder_core::{Engine, Error, RelevanceLevel, Session, SessionConfig, SessionStore};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

pub use error::{classify, ApiError};

type ApiResult<T> = Result<T, ApiError>;

struct Inner {
    engine: Arc<Engine>,
    store: SessionStore,
    session_config: SessionConfig,
    search_k: usize,
    enrich_k: usize,
    sessions: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
}

/// Shared handler state.
#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    pub fn new(engine: Arc<Engine>, store: SessionStore, session_config: SessionConfig) -> Self {
        let (search_k, enrich_k) = (session_config.search_k, session_config.enrich_k);
        AppState(Arc::new(Inner {
            engine,
            store,
            session_config,
            search_k,
            enrich_k,
            sessions: Mutex::new(HashMap::new()),
        }))
    }

    pub fn engine(&self) -> &Engine {
        &self.0.engine
    }

    fn handle(&self, session_id: &str) -> ApiResult<Arc<Mutex<Session>>> {
        let mut sessions = self.0.sessions.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(s) = sessions.get(session_id) {
            return Ok(s.clone());
        }
        let session = self.0.store.load(session_id)?;
        let handle = Arc::new(Mutex::new(session));
        sessions.insert(session_id.to_string(), handle.clone());
        Ok(handle)
    }

    /// Runs `f` on a blocking thread with the session locked.
    async fn with_session<R, F>(&self, session_id: String, f: F) -> ApiResult<R>
    where
        R: Send + 'static,
        F: FnOnce(&Engine, &mut Session) -> ApiResult<R> + Send + 'static,
    {
        let state = self.clone();
        blocking(move || {
            let handle = state.handle(&session_id)?;
            let mut session = handle.lock().unwrap_or_else(|e| e.into_inner());
            f(&state.0.engine, &mut session)
        })
        .await
    }
}

async fn blocking<R, F>(f: F) -> ApiResult<R>
where
    R: Send + 'static,
    F: FnOnce() -> ApiResult<R> + Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> ApiResult<T> {
    payload
        .map(|Json(v)| v)
        .map_err(|e| ApiError::bad_request(e.body_text()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreateSession {
    pub task_narrative: String,
    pub request_narrative: String,
    /// Overrides the configured field weights for this session.
    #[serde(default)]
    pub field_weights: Option<FieldWeights<f64>>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SearchRequest {
    pub terms: String,
    pub k: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JudgmentRequest {
    pub sentence_id: String,
    pub level: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct EnrichRequest {
    pub k: Option<usize>,
}

/// A returned sentence with the active query terms it contains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceHit {
    pub rank: usize,
    pub sentence_id: String,
    pub doc_id: String,
    pub score: f64,
    pub text: String,
    pub matched: MatchedTerms,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResponse {
    pub session_id: String,
    pub iteration: u32,
    pub search_terms: Vec<String>,
    pub query: WeightedQuery<f64>,
    pub results: Vec<SentenceHit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrichResponse {
    pub session_id: String,
    pub iteration: u32,
    pub example_count: usize,
    pub warning: Option<String>,
    pub results: Vec<SentenceHit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgmentResponse {
    pub judgment: Judgment,
    pub session: SessionSnapshot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextSentence {
    pub sentence_id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceResponse {
    pub sentence_id: String,
    pub doc_id: String,
    pub position: usize,
    pub text: String,
    pub previous: Option<ContextSentence>,
    pub next: Option<ContextSentence>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub corpus_docs: usize,
}

fn hits(
    engine: &Engine,
    list: &RankedList<f64>,
    query: &WeightedQuery<f64>,
    typed: &BTreeSet<String>,
) -> ApiResult<Vec<SentenceHit>> {
    list.items
        .iter()
        .enumerate()
        .map(|(i, item)| {
            let s = engine.sentence(&item.id)?;
            Ok(SentenceHit {
                rank: i + 1,
                sentence_id: s.sentence_id.clone(),
                doc_id: s.doc_id.clone(),
                score: item.score,
                text: s.text.clone(),
                matched: matched_terms(query, typed, s),
            })
        })
        .collect()
}

async fn health(State(state): State<AppState>) -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        corpus_docs: state.engine().corpus.doc_count(),
    })
}

async fn create_session(
    State(state): State<AppState>,
    payload: Result<Json<CreateSession>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<SessionSnapshot>)> {
    let req = body(payload)?;
    let mut config = state.0.session_config.clone();
    if let Some(w) = req.field_weights {
        config.field_weights = w;
    }
    let st = state.clone();
    let session = blocking(move || {
        Ok(st
            .0
            .store
            .create(&req.task_narrative, &req.request_narrative, config)?)
    })
    .await?;
    let snapshot = session.snapshot();
    state
        .0
        .sessions
        .lock()
        .unwrap_or_else(|e| e.into_inner())
        .insert(session.id().to_string(), Arc::new(Mutex::new(session)));
    Ok((StatusCode::CREATED, Json(snapshot)))
}

async fn get_session(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<SessionSnapshot>> {
    state
        .with_session(id, |_, s| Ok(s.snapshot()))
        .await
        .map(Json)
}

async fn search(
    State(state): State<AppState>,
    Path(id): Path<String>,
    payload: Result<Json<SearchRequest>, JsonRejection>,
) -> ApiResult<Json<SearchResponse>> {
    let req = body(payload)?;
    let k = req.k.unwrap_or(state.0.search_k);
    state
        .with_session(id, move |engine, s| {
            let out = s.run_initial_search(engine, &req.terms, k)?;
            let typed: BTreeSet<String> = out.search_terms.iter().cloned().collect();
            let results = hits(engine, &out.results, &out.query, &typed)?;
            Ok(SearchResponse {
                session_id: s.id().to_string(),
                iteration: out.iteration,
                search_terms: out.search_terms,
                query: out.query,
                results,
            })
        })
        .await
        .map(Json)
}

async fn judge(
    State(state): State<AppState>,
    Path(id): Path<String>,
    payload: Result<Json<JudgmentRequest>, JsonRejection>,
) -> ApiResult<Json<JudgmentResponse>> {
    let req = body(payload)?;
    let level: RelevanceLevel = req.level.parse()?;
    state
        .with_session(id, move |engine, s| {
            let judgment = s.record_judgment(engine, &req.sentence_id, level)?.clone();
            Ok(JudgmentResponse {
                judgment,
                session: s.snapshot(),
            })
        })
        .await
        .map(Json)
}

async fn enrich(
    State(state): State<AppState>,
    Path(id): Path<String>,
    payload: Option<Json<EnrichRequest>>,
) -> ApiResult<Json<EnrichResponse>> {
    let k = payload.and_then(|Json(r)| r.k).unwrap_or(state.0.enrich_k);
    state
        .with_session(id, move |engine, s| {
            let out = s.run_enrichment(engine, k)?;
            let query = match s.current_query(engine) {
                Ok(q) => q,
                Err(Error::EmptyQuery) => WeightedQuery::new("empty"),
                Err(e) => return Err(e.into()),
            };
            let results = hits(engine, &out.results, &query, &s.typed_terms(engine))?;
            Ok(EnrichResponse {
                session_id: s.id().to_string(),
                iteration: out.iteration,
                example_count: out.example_count,
                warning: out.warning,
                results,
            })
        })
        .await
        .map(Json)
}

async fn export(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<querybuilder_core::session::ExportRecord>> {
    state
        .with_session(id, |engine, s| Ok(s.export_query(engine)?))
        .await
        .map(Json)
}

async fn stats(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<SessionStats>> {
    state
        .with_session(id, |_, s| Ok(compute_stats(std::slice::from_ref(s))))
        .await
        .map(Json)
}

async fn sentence(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<SentenceResponse>> {
    let engine = state.engine();
    let s = engine.sentence(&id)?;
    let (prev, next) = engine.corpus.neighbours(&id).unwrap_or((None, None));
    let ctx = |r: &querybuilder_core::SentenceRecord| ContextSentence {
        sentence_id: r.sentence_id.clone(),
        text: r.text.clone(),
    };
    Ok(Json(SentenceResponse {
        sentence_id: s.sentence_id.clone(),
        doc_id: s.doc_id.clone(),
        position: s.position,
        text: s.text.clone(),
        previous: prev.map(ctx),
        next: next.map(ctx),
    }))
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
}

async fn method_not_allowed() -> ApiError {
    ApiError::new(
        StatusCode::METHOD_NOT_ALLOWED,
        "method_not_allowed",
        "method not allowed",
    )
}

/// All API routes, without CORS.
pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/sessions", post(create_session))
        .route("/api/sessions/{id}", get(get_session))
        .route("/api/sessions/{id}/search", post(search))
        .route("/api/sessions/{id}/judgments", post(judge))
        .route("/api/sessions/{id}/enrich", post(enrich))
        .route("/api/sessions/{id}/export", post(export))
        .route("/api/sessions/{id}/stats", get(stats))
        .route("/api/sentences/{id}", get(sentence))
        .fallback(not_found)
        .method_not_allowed_fallback(method_not_allowed)
        .with_state(state)
}

pub fn cors_layer(origins: &[String]) -> CorsLayer {
    let layer = CorsLayer::new().allow_methods(Any).allow_headers(Any);
    if origins.iter().any(|o| o == "*") {
        layer.allow_origin(Any)
    } else {
        let list: Vec<HeaderValue> = origins
            .iter()
            .filter_map(|o| HeaderValue::from_str(o).ok())
            .collect();
        layer.allow_origin(AllowOrigin::list(list))
    }
}

/// Loads the engine and session store named by `config`. Without a vector
/// file on disk the vector index is built in memory.
pub fn load_state(config: &AppConfig) -> querybuilder_core::Result<AppState> {
    let mut engine = Engine::open(config)?;
    if engine.vectors.is_none() {
        tracing::warn!(
            path = %config.paths.vectors_path().display(),
            "no vector index on disk; embedding the corpus in memory"
        );
        engine.build_vectors()?;
    }
    let store = SessionStore::open(&config.paths.sessions)?;
    Ok(AppState::new(
        Arc::new(engine),
        store,
        config.session_config(),
    ))
}

/// Serves `state` on `listener` until `shutdown` resolves.
pub async fn serve_on(
    listener: TcpListener,
    state: AppState,
    cors_origins: &[String],
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let app = router(state).layer(cors_layer(cors_origins));
    axum::serve(listener, app)
        .with_graceful_shutdown(shutdown)
        .await
}

/// Loads everything, binds the configured address and serves until SIGINT
/// or SIGTERM. Session logs are synced on every write, so nothing is left
/// to flush at shutdown.
pub async fn serve(config: AppConfig) -> Result<(), Box<dyn std::error::Error + Send + Sync>> {
    let cfg = config.clone();
    let state = tokio::task::spawn_blocking(move || load_state(&cfg)).await??;
    let addr: SocketAddr = format!("{}:{}", config.server.host, config.server.port)
        .parse()
        .map_err(|e| {
            format!(
                "bad listen address {}:{}: {e}",
                config.server.host, config.server.port
            )
        })?;
    let listener = TcpListener::bind(addr)
        .await
        .map_err(|e| format!("cannot bind {addr}: {e}"))?;
    tracing::info!(%addr, docs = state.engine().corpus.doc_count(), "listening");
    serve_on(
        listener,
        state,
        &config.server.cors_origins,
        shutdown_signal(),
    )
    .await?;
    tracing::info!("shut down");
    Ok(())
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = term => {}
    }
}
