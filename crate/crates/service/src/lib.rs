//! JSON-over-HTTP front for interactive sessions: a person supplies the
//! preference for each duel pair.
//!
//! Routes:
//! - `POST /sessions` with a session config, returns `{session_id, config_hash}`
//! - `POST /sessions/{id}/query` `{query}` returns `{pair_id, response_a, response_b}`
//! - `POST /sessions/{id}/feedback` `{pair_id, preferred: "a"|"b"}` returns `{round, train_loss}`
//! - `GET /sessions/{id}/metrics` returns `{rows, theta_rounds}`
//! - `POST /sessions/{id}/deploy` `{query}` returns `{response}`
//! - `GET /schema`
//!
//! Errors are `{code, message, field?}`.

mod error;
mod schema;
mod store;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use duelsteer_core::session::{Duel, SessionConfig, SessionState};
use duelsteer_core::Covariance;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tower_http::cors::CorsLayer;

pub use error::ApiError;
pub use store::Store;

/// One metrics row of an interactive session. Oracle truths are not known here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRow {
    pub round: usize,
    pub train_loss: f64,
    pub mean_bonus: f64,
}

struct Pending {
    pair_id: String,
    duel: Duel,
    cov: Covariance,
    /// `true` when response "a" is `y1`.
    a_is_y1: bool,
}

pub(crate) struct Slot {
    pub(crate) state: SessionState,
    pub(crate) created_at: u64,
    pub(crate) rows: Vec<RoundRow>,
    pending: Option<Pending>,
    judged: Vec<String>,
}

type Shared = Arc<tokio::sync::Mutex<Slot>>;

/// Server state: the live sessions and where they are persisted.
#[derive(Clone)]
pub struct AppState {
    sessions: Arc<Mutex<HashMap<String, Shared>>>,
    store: Arc<Store>,
}

impl AppState {
    /// Opens `data_dir`, reloading every session persisted there.
    pub fn open(data_dir: impl Into<PathBuf>) -> Result<Self, duelsteer_core::Error> {
        let store = Store::new(data_dir.into())?;
        let mut sessions = HashMap::new();
        for (id, state, rows, created_at) in store.load_all()? {
            let slot = Slot { state, created_at, rows, pending: None, judged: Vec::new() };
            sessions.insert(id, Arc::new(tokio::sync::Mutex::new(slot)));
        }
        Ok(AppState { sessions: Arc::new(Mutex::new(sessions)), store: Arc::new(store) })
    }

    pub fn session_count(&self) -> usize {
        self.sessions.lock().expect("session map poisoned").len()
    }

    fn get(&self, id: &str) -> Result<Shared, ApiError> {
        self.sessions
            .lock()
            .expect("session map poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("no session `{id}`")))
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/query", post(submit_query))
        .route("/sessions/{id}/feedback", post(submit_feedback))
        .route("/sessions/{id}/metrics", get(get_metrics))
        .route("/sessions/{id}/deploy", post(deploy))
        .route("/schema", get(schema))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

/// Binds and serves until the process is stopped.
pub async fn serve(addr: SocketAddr, data_dir: PathBuf) -> std::io::Result<()> {
    let state = AppState::open(data_dir).map_err(std::io::Error::other)?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}

fn parse_body(body: &Bytes) -> Result<serde_json::Map<String, Value>, ApiError> {
    match serde_json::from_slice::<Value>(body) {
        Ok(Value::Object(m)) => Ok(m),
        Ok(_) => Err(ApiError::bad_request("request body must be a JSON object", None)),
        Err(e) => Err(ApiError::bad_request(format!("malformed JSON: {e}"), None)),
    }
}

fn string_field(body: &serde_json::Map<String, Value>, name: &str) -> Result<String, ApiError> {
    match body.get(name) {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(ApiError::bad_request(format!("`{name}` must be a string"), Some(name))),
        None => Err(ApiError::bad_request(format!("missing `{name}`"), Some(name))),
    }
}

fn now_secs() -> u64 {
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::internal(e.to_string()))?
}

#[derive(Serialize)]
struct Created {
    session_id: String,
    config_hash: String,
    created_at: u64,
}

async fn create_session(State(app): State<AppState>, body: Bytes) -> Result<(StatusCode, Json<Created>), ApiError> {
    let text = std::str::from_utf8(&body).map_err(|_| ApiError::bad_request("body is not UTF-8", None))?.to_owned();
    let store = app.store.clone();
    let (id, slot) = blocking(move || {
        let config = SessionConfig::from_json(&text).map_err(ApiError::from_config)?;
        let state = SessionState::new(config).map_err(ApiError::from_config)?;
        let id = uuid::Uuid::new_v4().simple().to_string();
        let created_at = now_secs();
        store.create(&id, &state, created_at).map_err(ApiError::storage)?;
        Ok((id, Slot { state, created_at, rows: Vec::new(), pending: None, judged: Vec::new() }))
    })
    .await?;
    let resp = Created {
        session_id: id.clone(),
        config_hash: slot.state.config_hash().to_owned(),
        created_at: slot.created_at,
    };
    app.sessions.lock().expect("session map poisoned").insert(id, Arc::new(tokio::sync::Mutex::new(slot)));
    Ok((StatusCode::CREATED, Json(resp)))
}

fn tokenize_query(
    state: &SessionState,
    body: &serde_json::Map<String, Value>,
) -> Result<Vec<duelsteer_core::TokenId>, ApiError> {
    let text = string_field(body, "query")?;
    if text.trim().is_empty() {
        return Err(ApiError::bad_request("query must not be empty", Some("query")));
    }
    Ok(state.tokenize(&text))
}

#[derive(Serialize)]
struct PairResponse {
    pair_id: String,
    response_a: String,
    response_b: String,
}

async fn submit_query(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<PairResponse>, ApiError> {
    let body = parse_body(&body)?;
    let mut slot = app.get(&id)?.lock_owned().await;
    if slot.pending.is_some() {
        return Err(ApiError::conflict("a pair is awaiting feedback"));
    }
    if slot.state.is_frozen() {
        return Err(ApiError::conflict("session is frozen"));
    }
    let query = tokenize_query(&slot.state, &body)?;
    blocking(move || {
        let (duel, cov) = slot.state.generate_duel(&query).map_err(ApiError::internal_from)?;
        let a_is_y1 = rand::random::<bool>();
        let (y1, y2) = (slot.state.detokenize(&duel.y1), slot.state.detokenize(&duel.y2));
        let (response_a, response_b) = if a_is_y1 { (y1, y2) } else { (y2, y1) };
        let pair_id = uuid::Uuid::new_v4().simple().to_string();
        slot.pending = Some(Pending { pair_id: pair_id.clone(), duel, cov, a_is_y1 });
        Ok(Json(PairResponse { pair_id, response_a, response_b }))
    })
    .await
}

#[derive(Serialize)]
struct FeedbackResponse {
    round: usize,
    train_loss: f64,
}

async fn submit_feedback(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<FeedbackResponse>, ApiError> {
    let body = parse_body(&body)?;
    let mut slot = app.get(&id)?.lock_owned().await;
    let pair_id = string_field(&body, "pair_id")?;
    if slot.judged.contains(&pair_id) {
        return Err(ApiError::gone(format!("pair `{pair_id}` was already judged")));
    }
    if slot.pending.as_ref().is_none_or(|p| p.pair_id != pair_id) {
        return Err(ApiError::not_found(format!("no pending pair `{pair_id}`")));
    }
    let prefers_a = match body.get("preferred") {
        Some(Value::String(s)) if s == "a" => true,
        Some(Value::String(s)) if s == "b" => false,
        _ => return Err(ApiError::unprocessable("`preferred` must be \"a\" or \"b\"", "preferred")),
    };
    let store = app.store.clone();
    blocking(move || {
        let p = slot.pending.take().expect("checked above");
        let label = prefers_a == p.a_is_y1;
        let outcome = match slot.state.finish_round(&p.duel, p.cov.clone(), label) {
            Ok(o) => o,
            Err(e) => {
                slot.pending = Some(p);
                return Err(ApiError::internal_from(e));
            }
        };
        let row = RoundRow { round: outcome.round, train_loss: outcome.train_loss, mean_bonus: p.duel.mean_bonus() };
        slot.judged.push(p.pair_id);
        slot.rows.push(row.clone());
        store.record_round(&id, &slot.state, &row).map_err(ApiError::storage)?;
        Ok(Json(FeedbackResponse { round: outcome.round, train_loss: outcome.train_loss }))
    })
    .await
}

#[derive(Serialize)]
struct MetricsResponse {
    rows: Vec<RoundRow>,
    theta_rounds: usize,
    config_hash: String,
    pending_pair_id: Option<String>,
}

async fn get_metrics(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<MetricsResponse>, ApiError> {
    let slot = app.get(&id)?.lock_owned().await;
    Ok(Json(MetricsResponse {
        rows: slot.rows.clone(),
        theta_rounds: slot.state.round(),
        config_hash: slot.state.config_hash().to_owned(),
        pending_pair_id: slot.pending.as_ref().map(|p| p.pair_id.clone()),
    }))
}

#[derive(Serialize)]
struct DeployResponse {
    response: String,
}

async fn deploy(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<DeployResponse>, ApiError> {
    let body = parse_body(&body)?;
    let slot = app.get(&id)?.lock_owned().await;
    let query = tokenize_query(&slot.state, &body)?;
    blocking(move || {
        let y = slot.state.deploy_generate(&query).map_err(ApiError::internal_from)?;
        Ok(Json(DeployResponse { response: slot.state.detokenize(&y) }))
    })
    .await
}

async fn schema() -> Json<Value> {
    Json(schema::document())
}
