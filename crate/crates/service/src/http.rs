//! JSON-over-HTTP API.
//!
//! | method | path | body | reply |
//! |---|---|---|---|
//! | GET | `/v1/auth/nonce` | | `{"nonce","expires_in"}` |
//! | POST | `/v1/auth` | `{"username","password","nonce"?}` | `AuthResponse` |
//! | POST | `/v1/auth/verify` | `{"username","passcode"}` | `AuthResponse` |
//! | GET | `/v1/session` | bearer session token | `{"user","expires_at"}` |
//! | GET | `/v1/rtt?nonce=` | WebSocket upgrade | see [`crate::rtt`] |
//! | POST | `/v1/admin/users` | `{"username","password","contact"?}` | `UserView` |
//! | POST | `/v1/admin/users/{username}/contact` | `{"contact"}` | `UserView` |
//! | POST | `/v1/admin/reputation/reload` | `{"source"?}` | `{"prefixes","source"}` |
//! | GET | `/v1/admin/config` | | effective settings |
//!
//! `AuthResponse` is `{"status":"success","token","expires_at"}`,
//! `{"status":"passcode_required","message"}` or
//! `{"status":"failure","message"}` (HTTP 401). Malformed requests get
//! `{"status":"error","message"}` with HTTP 400. Admin routes need
//! `Authorization: Bearer <admin_token>`.

use std::net::{IpAddr, SocketAddr};
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{ConnectInfo, FromRequestParts, Path, Query, State};
use axum::http::request::Parts;
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use rba_core::features::Secret;
use rba_core::reputation::ReputationSource;
use rba_core::verification::codes_match;
use rba_core::RawLoginAttempt;
use serde::Deserialize;
use serde_json::json;
use tower_http::services::ServeDir;

use crate::auth::{is_url, AdminError, AuthResponse, AuthService, RequestError};
use crate::rtt::{PingRound, RttFrame};
use crate::users::UserStoreError;

#[derive(Clone)]
pub struct AppState {
    pub service: Arc<AuthService>,
    pub http: reqwest::Client,
}

impl AppState {
    pub fn new(service: Arc<AuthService>) -> Self {
        let http = reqwest::Client::builder()
            .timeout(Duration::from_secs(30))
            .build()
            .expect("HTTP client builds");
        AppState { service, http }
    }
}

pub fn router(state: AppState) -> Router {
    let static_dir = state.service.config().static_dir.clone();
    let api = Router::new()
        .route("/v1/auth/nonce", get(nonce))
        .route("/v1/auth", post(authenticate))
        .route("/v1/auth/verify", post(verify))
        .route("/v1/session", get(session))
        .route("/v1/rtt", get(rtt))
        .route("/v1/admin/users", post(create_user))
        .route("/v1/admin/users/{username}/contact", post(set_contact))
        .route("/v1/admin/reputation/reload", post(reload_reputation))
        .route("/v1/admin/config", get(config))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError { status, message: message.into() }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({"status": "error", "message": self.message}))).into_response()
    }
}

impl From<RequestError> for ApiError {
    fn from(e: RequestError) -> Self {
        ApiError::bad_request(e.to_string())
    }
}

impl From<AdminError> for ApiError {
    fn from(e: AdminError) -> Self {
        let status = match &e {
            AdminError::Users(UserStoreError::Duplicate(_)) => StatusCode::CONFLICT,
            AdminError::Users(UserStoreError::NotFound(_)) => StatusCode::NOT_FOUND,
            AdminError::Users(UserStoreError::Invalid { .. }) => StatusCode::BAD_REQUEST,
            AdminError::Reputation(_) => StatusCode::UNPROCESSABLE_ENTITY,
            AdminError::Users(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.to_string())
    }
}

fn parse_json<T: serde::de::DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))
}

fn auth_reply(response: AuthResponse) -> Response {
    let status = match response {
        AuthResponse::Failure { .. } => StatusCode::UNAUTHORIZED,
        _ => StatusCode::OK,
    };
    (status, Json(response)).into_response()
}

/// Client address and user agent as seen by the transport.
pub struct ClientInfo {
    pub ip: IpAddr,
    pub user_agent: String,
}

impl FromRequestParts<AppState> for ClientInfo {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &AppState) -> Result<Self, Self::Rejection> {
        let user_agent = parts
            .headers
            .get(header::USER_AGENT)
            .and_then(|v| v.to_str().ok())
            .unwrap_or("")
            .to_owned();
        let forwarded = state
            .service
            .config()
            .trust_forwarded_for
            .then(|| parts.headers.get("x-forwarded-for"))
            .flatten()
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.split(',').next())
            .and_then(|v| v.trim().parse::<IpAddr>().ok());
        let peer = ConnectInfo::<SocketAddr>::from_request_parts(parts, state).await.ok().map(|c| c.0.ip());
        let ip = forwarded.or(peer).ok_or_else(|| ApiError::bad_request("client address unavailable"))?;
        Ok(ClientInfo { ip, user_agent })
    }
}

/// Checks `Authorization: Bearer <admin_token>`.
pub struct Admin;

impl FromRequestParts<AppState> for Admin {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &AppState) -> Result<Self, Self::Rejection> {
        let Some(expected) = state.service.config().admin_token.as_deref() else {
            return Err(ApiError::new(StatusCode::FORBIDDEN, "admin API is disabled"));
        };
        let given = bearer(&parts.headers).unwrap_or("");
        if codes_match(expected, given) {
            Ok(Admin)
        } else {
            Err(ApiError::new(StatusCode::UNAUTHORIZED, "admin token required"))
        }
    }
}

fn bearer(headers: &HeaderMap) -> Option<&str> {
    headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .map(str::trim)
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|_| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "request failed"))
}

async fn nonce(State(state): State<AppState>) -> Result<Json<serde_json::Value>, ApiError> {
    let rtt = state.service.rtt();
    let nonce = rtt
        .issue()
        .ok_or_else(|| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "too many pending measurements"))?;
    Ok(Json(json!({"nonce": nonce, "expires_in": rtt.ttl().as_secs()})))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LoginBody {
    username: String,
    password: String,
    #[serde(default)]
    nonce: Option<String>,
}

async fn authenticate(State(state): State<AppState>, client: ClientInfo, body: Bytes) -> Result<Response, ApiError> {
    let body: LoginBody = parse_json(&body)?;
    let rtt_samples_ms = body.nonce.as_deref().map(|n| state.service.rtt().take(n)).unwrap_or_default();
    let raw = RawLoginAttempt {
        username: body.username,
        password: Secret::new(body.password),
        ip: client.ip.to_string(),
        ua: client.user_agent,
        rtt_samples_ms,
        passcode: None,
    };
    let service = state.service.clone();
    let decision = blocking(move || service.authenticate(&raw)).await??;
    Ok(auth_reply(decision.response))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct VerifyBody {
    username: String,
    passcode: String,
}

async fn verify(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let body: VerifyBody = parse_json(&body)?;
    let service = state.service.clone();
    let decision = blocking(move || service.verify(&body.username, &body.passcode)).await??;
    Ok(auth_reply(decision.response))
}

async fn session(State(state): State<AppState>, headers: HeaderMap) -> Result<Json<serde_json::Value>, ApiError> {
    let session = bearer(&headers)
        .and_then(|t| state.service.session(t))
        .ok_or_else(|| ApiError::new(StatusCode::UNAUTHORIZED, "no valid session"))?;
    Ok(Json(json!({"user": session.user, "expires_at": session.expires_at})))
}

#[derive(Deserialize)]
struct RttQuery {
    nonce: String,
}

async fn rtt(State(state): State<AppState>, Query(q): Query<RttQuery>, ws: WebSocketUpgrade) -> Response {
    if !state.service.rtt().awaiting(&q.nonce) {
        return ApiError::new(StatusCode::NOT_FOUND, "unknown or expired nonce").into_response();
    }
    ws.on_upgrade(move |socket| measure_rtt(socket, state, q.nonce))
}

async fn measure_rtt(mut socket: WebSocket, state: AppState, nonce: String) {
    let cfg = state.service.config().rtt;
    let (mut round, frames) = PingRound::start(cfg.pings);
    for (seq, frame) in frames.into_iter().enumerate() {
        round.mark_sent(seq);
        if socket.send(Message::Text(frame.into())).await.is_err() {
            return;
        }
    }
    let deadline = tokio::time::Instant::now() + Duration::from_millis(cfg.timeout_ms);
    while !round.complete() {
        match tokio::time::timeout_at(deadline, socket.recv()).await {
            Ok(Some(Ok(Message::Text(text)))) => round.echo(text.as_str()),
            Ok(Some(Ok(Message::Close(_)))) | Ok(Some(Err(_))) | Ok(None) | Err(_) => break,
            Ok(Some(Ok(_))) => {}
        }
    }
    let recorded = match round.samples() {
        Some(samples) if state.service.rtt().record(&nonce, samples.clone()) => samples.len(),
        _ => 0,
    };
    let done = serde_json::to_string(&RttFrame::Done { samples: recorded as u32 }).expect("frame");
    let _ = socket.send(Message::Text(done.into())).await;
    let _ = socket.send(Message::Close(None)).await;
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateUserBody {
    username: String,
    password: String,
    #[serde(default)]
    contact: Option<String>,
}

async fn create_user(State(state): State<AppState>, _: Admin, body: Bytes) -> Result<Response, ApiError> {
    let body: CreateUserBody = parse_json(&body)?;
    let service = state.service.clone();
    let view = blocking(move || service.create_user(&body.username, &body.password, body.contact.as_deref())).await??;
    Ok((StatusCode::CREATED, Json(view)).into_response())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ContactBody {
    contact: String,
}

async fn set_contact(
    State(state): State<AppState>,
    _: Admin,
    Path(username): Path<String>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let body: ContactBody = parse_json(&body)?;
    let view = state.service.set_contact(&username, &body.contact)?;
    Ok(Json(view).into_response())
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct ReloadBody {
    #[serde(default)]
    source: Option<String>,
}

/// Fetches a list from a file path or URL into a refresh source.
pub async fn fetch_reputation_source(client: &reqwest::Client, source: &str) -> Result<ReputationSource, String> {
    if !is_url(source) {
        return Ok(ReputationSource::File(source.into()));
    }
    let response = client.get(source).send().await.map_err(|e| e.to_string())?;
    let status = response.status();
    if !status.is_success() {
        return Err(format!("{source} answered {status}"));
    }
    let body = response.text().await.map_err(|e| e.to_string())?;
    Ok(ReputationSource::Text { name: source.to_owned(), body })
}

async fn reload_reputation(State(state): State<AppState>, _: Admin, body: Bytes) -> Result<Response, ApiError> {
    let body: ReloadBody = if body.iter().all(u8::is_ascii_whitespace) { ReloadBody::default() } else { parse_json(&body)? };
    let source = body
        .source
        .or_else(|| state.service.config().reputation.source.clone())
        .ok_or_else(|| ApiError::bad_request("no reputation source given or configured"))?;
    let fetched = fetch_reputation_source(&state.http, &source).await.map_err(|e| {
        tracing::warn!(error = %e, "reputation fetch failed, keeping previous list");
        ApiError::new(StatusCode::BAD_GATEWAY, e)
    })?;
    let service = state.service.clone();
    let prefixes = blocking(move || service.reload_reputation(&fetched)).await??;
    Ok(Json(json!({"prefixes": prefixes, "source": source})).into_response())
}

async fn config(State(state): State<AppState>, _: Admin) -> Json<serde_json::Value> {
    let cfg = state.service.config();
    let mut risk = serde_json::to_value(&cfg.risk).expect("risk config serializes");
    // JSON has no infinity.
    for key in ["threshold_reauth", "threshold_reject"] {
        let v: f64 = if key == "threshold_reauth" { cfg.risk.threshold_reauth } else { cfg.risk.threshold_reject };
        if v.is_infinite() {
            risk[key] = json!("inf");
        }
    }
    Json(json!({
        "risk": risk,
        "challenge": cfg.challenge,
        "rtt": cfg.rtt,
        "session_ttl_secs": cfg.session_ttl_secs,
        "reputation": cfg.reputation,
        "trust_forwarded_for": cfg.trust_forwarded_for,
        "reputation_prefixes": state.service.reputation().current().len(),
    }))
}
