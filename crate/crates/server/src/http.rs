//! REST endpoints, the sensor ingestion endpoint and the MCP HTTP transport.

use std::collections::HashMap;
use std::sync::Arc;

use ami_core::agent::{AgentError, AuditEntry, PlannerError};
use ami_core::ingest::{parse_reading, parse_timestamp, IngestResult};
use ami_core::mcp::{ErrorCode, ToolResult};
use ami_core::openapi::registry_to_openapi;
use ami_core::timeseries::{Field, StoreError, TimeRange};
use ami_core::tools::UPDATE_USER_PROFILE;
use axum::body::Bytes;
use axum::extract::{FromRequestParts, Query, State};
use axum::http::header::{AUTHORIZATION, CONTENT_DISPOSITION, CONTENT_TYPE};
use axum::http::request::Parts;
use axum::http::{HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::{json, Map, Value};

use crate::state::AppState;

pub const DEVICE_KEY_HEADER: &str = "x-device-key";
pub const MAX_READINGS_LIMIT: usize = 1000;

type Shared = Arc<AppState>;

pub fn router(state: Shared, static_dir: Option<&std::path::Path>) -> Router {
    let api = Router::new()
        .route("/sensor_data/", post(post_sensor_data))
        .route("/api/login", post(login))
        .route("/api/logout", post(logout))
        .route("/api/chat", post(chat))
        .route("/api/conversation", get(conversation))
        .route("/api/readings/recent", get(readings_recent))
        .route("/api/readings/range", get(readings_range))
        .route("/api/readings/aggregate", get(readings_aggregate))
        .route("/api/export.csv", get(export_csv))
        .route("/api/issues", get(issues))
        .route("/api/profile", get(get_profile).put(put_profile))
        .route("/api/openapi.json", get(openapi))
        .route("/mcp", post(mcp))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => api,
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: Value,
}

impl ApiError {
    pub fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            body: json!({ "error": message.into() }),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    fn on_field(field: &str, message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            body: json!({ "error": message.into(), "field": field }),
        }
    }

    fn unauthorized() -> Self {
        Self::new(StatusCode::UNAUTHORIZED, "missing, invalid or expired session token")
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

/// The user behind a valid `Authorization: Bearer <token>` header.
pub struct AuthUser(pub String);

fn bearer(headers: &HeaderMap) -> Option<&str> {
    let value = headers.get(AUTHORIZATION)?.to_str().ok()?;
    let (scheme, token) = value.split_once(' ')?;
    scheme.eq_ignore_ascii_case("bearer").then(|| token.trim())
}

impl FromRequestParts<Shared> for AuthUser {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &Shared) -> Result<Self, Self::Rejection> {
        bearer(&parts.headers)
            .and_then(|t| state.auth.authenticate(t))
            .map(AuthUser)
            .ok_or_else(ApiError::unauthorized)
    }
}

fn is_json_content(headers: &HeaderMap) -> bool {
    headers
        .get(CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .map(|v| v.split(';').next().unwrap_or_default().trim().to_ascii_lowercase())
        .is_some_and(|mime| mime == "application/json" || (mime.starts_with("application/") && mime.ends_with("+json")))
}

fn json_object(body: &[u8]) -> Result<Map<String, Value>, ApiError> {
    match serde_json::from_slice::<Value>(body) {
        Ok(Value::Object(m)) => Ok(m),
        Ok(_) => Err(ApiError::bad_request("body must be a JSON object")),
        Err(e) => Err(ApiError::bad_request(format!("body is not valid JSON: {e}"))),
    }
}

async fn post_sensor_data(State(s): State<Shared>, headers: HeaderMap, body: Bytes) -> Result<Response, ApiError> {
    if let Some(key) = &s.device_key {
        let given = headers.get(DEVICE_KEY_HEADER).map(HeaderValue::as_bytes);
        if given != Some(key.as_bytes()) {
            return Err(ApiError::new(StatusCode::UNAUTHORIZED, "missing or wrong device key"));
        }
    }
    if !is_json_content(&headers) {
        return Err(ApiError::new(
            StatusCode::UNSUPPORTED_MEDIA_TYPE,
            "sensor data must be sent as application/json",
        ));
    }
    let body: Value = serde_json::from_slice(&body)
        .map_err(|e| ApiError::bad_request(format!("body is not valid JSON: {e}")))?;
    let reading = parse_reading(&body).map_err(|e| ApiError::on_field(&e.field, e.to_string()))?;
    let warnings = reading.flags.iter().copied().collect();
    match s.backend.readings.insert(reading) {
        Ok(stored_id) => Ok((StatusCode::CREATED, Json(IngestResult { stored_id, warnings })).into_response()),
        Err(StoreError::Invalid(v)) => Err(ApiError::on_field(v.field, v.to_string())),
        Err(e) => {
            tracing::error!("storing reading failed: {e}");
            Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "could not store reading"))
        }
    }
}

async fn login(State(s): State<Shared>, body: Bytes) -> Result<Response, ApiError> {
    let body = json_object(&body)?;
    let field = |name: &str| {
        body.get(name)
            .and_then(Value::as_str)
            .ok_or_else(|| ApiError::on_field(name, format!("`{name}` must be a string")))
    };
    let (username, password) = (field("username")?.to_owned(), field("password")?.to_owned());
    // password hashing is deliberately slow
    let auth = s.auth.clone();
    let session = tokio::task::spawn_blocking(move || auth.login(&username, &password))
        .await
        .map_err(|_| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "login failed"))?;
    match session {
        Ok(session) => Ok(Json(session).into_response()),
        Err(e) => Err(ApiError::new(StatusCode::UNAUTHORIZED, e.to_string())),
    }
}

async fn logout(State(s): State<Shared>, headers: HeaderMap, _: AuthUser) -> StatusCode {
    if let Some(token) = bearer(&headers) {
        s.auth.logout(token);
    }
    StatusCode::NO_CONTENT
}

/// One line of tool output for people: the error message, or the result
/// as compact JSON cut at 120 characters.
pub fn summarize(result: &ToolResult) -> String {
    if result.is_error {
        return format!("error: {}", result.error_message().unwrap_or("tool failed"));
    }
    let text = result.content.to_string();
    if text.chars().count() <= 120 {
        text
    } else {
        format!("{}...", text.chars().take(117).collect::<String>())
    }
}

fn audit_json(audit: &[AuditEntry]) -> Value {
    Value::Array(
        audit
            .iter()
            .map(|a| {
                json!({
                    "id": a.call.id,
                    "name": a.call.tool_name,
                    "args": a.call.args,
                    "result": a.result.content,
                    "is_error": a.result.is_error,
                    "summary": summarize(&a.result),
                })
            })
            .collect(),
    )
}

async fn chat(State(s): State<Shared>, AuthUser(user): AuthUser, body: Bytes) -> Result<Response, ApiError> {
    let body = json_object(&body)?;
    let message = body
        .get("message")
        .and_then(Value::as_str)
        .ok_or_else(|| ApiError::on_field("message", "`message` must be a string"))?
        .to_owned();
    if message.trim().is_empty() {
        return Err(ApiError::on_field("message", "message must not be empty"));
    }
    let state = s.clone();
    let outcome = tokio::task::spawn_blocking(move || {
        let now = state.backend.clock.now();
        state.conversations.with_conversation(&user, now, |conv| {
            state.agent.run_turn(conv, &message, state.planner.as_ref(), state.max_rounds)
        })
    })
    .await
    .map_err(|_| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "chat turn panicked"))?
    .map_err(|e| {
        tracing::error!("conversation log: {e}");
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "could not persist the conversation")
    })?;
    match outcome {
        Ok(turn) => Ok(Json(json!({ "reply": turn.reply, "tool_calls": audit_json(&turn.audit) })).into_response()),
        Err(AgentError::LoopExceeded { max_rounds, audit }) => Err(ApiError {
            status: StatusCode::CONFLICT,
            body: json!({
                "error": format!("agent-loop-exceeded: no final answer after {max_rounds} planner queries"),
                "tool_calls": audit_json(&audit),
            }),
        }),
        Err(AgentError::Planner(e @ (PlannerError::Unreachable(_) | PlannerError::MalformedResponse(_)))) => {
            Err(ApiError::new(StatusCode::BAD_GATEWAY, e.to_string()))
        }
        Err(AgentError::EmptyMessage) => Err(ApiError::on_field("message", "message must not be empty")),
        Err(e @ (AgentError::UnknownUser(_) | AgentError::WrongOwner { .. })) => {
            Err(ApiError::new(StatusCode::UNAUTHORIZED, e.to_string()))
        }
    }
}

async fn conversation(State(s): State<Shared>, AuthUser(user): AuthUser) -> Json<Value> {
    let messages = s
        .conversations
        .snapshot(&user)
        .map(|c| c.messages.into_iter().filter(|m| m.role != ami_core::agent::Role::System).collect())
        .unwrap_or_else(Vec::new);
    Json(json!({ "user_id": user, "messages": messages }))
}

type Params = Query<HashMap<String, String>>;

fn time_param(params: &HashMap<String, String>, key: &str) -> Result<Option<chrono::DateTime<chrono::Utc>>, ApiError> {
    let Some(raw) = params.get(key) else {
        return Ok(None);
    };
    let value = match raw.parse::<i64>() {
        Ok(n) => Value::from(n),
        Err(_) => Value::String(raw.clone()),
    };
    parse_timestamp(&value).map(Some).map_err(|m| ApiError::on_field(key, format!("{key}: {m}")))
}

fn range_param(params: &HashMap<String, String>) -> Result<TimeRange, ApiError> {
    let all = TimeRange::everything();
    let start = time_param(params, "start")?.unwrap_or(all.start());
    let end = time_param(params, "end")?.unwrap_or(all.end());
    TimeRange::new(start, end).map_err(|e| ApiError::on_field("start", e.to_string()))
}

async fn readings_recent(State(s): State<Shared>, _: AuthUser, Query(p): Params) -> Result<Response, ApiError> {
    let limit = match p.get("limit") {
        None => 1,
        Some(raw) => raw
            .parse::<usize>()
            .ok()
            .filter(|n| (1..=MAX_READINGS_LIMIT).contains(n))
            .ok_or_else(|| ApiError::on_field("limit", format!("limit must be an integer from 1 to {MAX_READINGS_LIMIT}")))?,
    };
    Ok(Json(s.backend.readings.query_recent(limit)).into_response())
}

async fn readings_range(State(s): State<Shared>, _: AuthUser, Query(p): Params) -> Result<Response, ApiError> {
    let range = range_param(&p)?;
    Ok(Json(s.backend.readings.query_range(&range)).into_response())
}

async fn readings_aggregate(State(s): State<Shared>, _: AuthUser, Query(p): Params) -> Result<Response, ApiError> {
    let range = range_param(&p)?;
    let field: Field = p
        .get("field")
        .ok_or_else(|| ApiError::on_field("field", "field is required"))?
        .parse()
        .map_err(|e: ami_core::timeseries::UnknownField| ApiError::on_field("field", e.to_string()))?;
    Ok(Json(s.backend.readings.aggregate(&range, field)).into_response())
}

async fn export_csv(State(s): State<Shared>, _: AuthUser, Query(p): Params) -> Result<Response, ApiError> {
    let range = range_param(&p)?;
    let bytes = s.backend.readings.export_csv(&range);
    Ok((
        [
            (CONTENT_TYPE, "text/csv; charset=utf-8"),
            (CONTENT_DISPOSITION, "attachment; filename=\"readings.csv\""),
        ],
        bytes,
    )
        .into_response())
}

async fn issues(State(s): State<Shared>, AuthUser(user): AuthUser) -> Response {
    Json(s.backend.list_issues(&user)).into_response()
}

async fn get_profile(State(s): State<Shared>, AuthUser(user): AuthUser) -> Result<Response, ApiError> {
    s.backend
        .profiles
        .get(&user)
        .map(|p| Json(p).into_response())
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("no profile for `{user}`")))
}

// Goes through tools/call so the identity overwrite applies here too.
async fn put_profile(State(s): State<Shared>, AuthUser(user): AuthUser, body: Bytes) -> Result<Response, ApiError> {
    let args = json_object(&body)?;
    let state = s.clone();
    let result = tokio::task::spawn_blocking(move || state.mcp.call_tool(UPDATE_USER_PROFILE, args, &user))
        .await
        .map_err(|_| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "profile update panicked"))?;
    match result {
        Ok(r) if !r.is_error => Ok(Json(r.content).into_response()),
        Ok(r) => Err(ApiError::bad_request(r.error_message().unwrap_or("profile update failed"))),
        Err(e) => Err(ApiError::bad_request(e.message)),
    }
}

async fn openapi(State(s): State<Shared>) -> Json<Value> {
    Json(registry_to_openapi(s.mcp.registry().definitions()))
}

async fn mcp(State(s): State<Shared>, AuthUser(user): AuthUser, body: Bytes) -> Response {
    let state = s.clone();
    let reply = tokio::task::spawn_blocking(move || state.mcp.handle_message(&body, &user))
        .await
        .unwrap_or(None);
    let Some(bytes) = reply else {
        return StatusCode::ACCEPTED.into_response();
    };
    let code = serde_json::from_slice::<Value>(&bytes)
        .ok()
        .and_then(|v| v.pointer("/error/code").and_then(Value::as_i64));
    let transport_error = [ErrorCode::ParseError, ErrorCode::InvalidRequest].map(|c| c.code());
    let status = if code.is_some_and(|c| transport_error.contains(&c)) {
        StatusCode::BAD_REQUEST
    } else {
        StatusCode::OK
    };
    (status, [(CONTENT_TYPE, "application/json")], bytes).into_response()
}
