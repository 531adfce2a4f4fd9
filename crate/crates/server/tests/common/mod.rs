#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::{Arc, OnceLock};

use ami_core::agent::{ConversationStore, Planner, ScriptedPlanner};
use ami_core::auth::{hash_password, Authenticator, UserRecord};
use ami_core::tools::profiles::UserProfile;
use ami_core::tools::AmiBackend;
use ami_core::FixedClock;
use ami_server::{router, AppState};
use axum::body::{to_bytes, Body};
use axum::http::{HeaderMap, Method, Request, StatusCode};
use axum::Router;
use chrono::{TimeZone, Utc};
use serde_json::Value;
use tower::ServiceExt;

pub const USERS: [&str; 3] = ["alice", "bob", "carol"];

pub fn password(user: &str) -> String {
    format!("{user}-secret")
}

fn hashes() -> &'static Vec<String> {
    static H: OnceLock<Vec<String>> = OnceLock::new();
    H.get_or_init(|| USERS.iter().map(|u| hash_password(&password(u))).collect())
}

pub fn rules_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../config/rules.txt")
}

pub fn start_time() -> chrono::DateTime<Utc> {
    Utc.with_ymd_and_hms(2025, 1, 1, 12, 0, 0).unwrap()
}

pub struct Harness {
    pub state: Arc<AppState>,
    pub app: Router,
    pub clock: FixedClock,
}

pub fn harness_with(planner: Arc<dyn Planner>, max_rounds: usize, device_key: Option<&str>) -> Harness {
    let clock = FixedClock::new(start_time());
    let profiles = USERS.iter().map(|u| UserProfile {
        user_id: u.to_string(),
        display_name: u.to_string(),
        email: format!("{u}@example.org"),
        notification_threshold_pm2_5: None,
    });
    let backend = AmiBackend::in_memory(profiles, Arc::new(clock.clone()));
    let records = USERS.iter().zip(hashes()).map(|(u, h)| UserRecord {
        username: u.to_string(),
        password_hash: h.clone(),
    });
    let auth = Authenticator::new(records, Arc::new(clock.clone()));
    let state = Arc::new(AppState::new(
        backend,
        auth,
        ConversationStore::in_memory(),
        planner,
        max_rounds,
        device_key.map(str::to_owned),
    ));
    Harness {
        app: router(state.clone(), None),
        state,
        clock,
    }
}

pub fn harness() -> Harness {
    harness_with(Arc::new(ScriptedPlanner::from_file(&rules_path()).unwrap()), 5, None)
}

pub struct Reply {
    pub status: StatusCode,
    pub headers: HeaderMap,
    pub body: Vec<u8>,
}

impl Reply {
    pub fn json(&self) -> Value {
        serde_json::from_slice(&self.body).unwrap_or_else(|e| {
            panic!("{e}: {}", String::from_utf8_lossy(&self.body));
        })
    }
}

pub async fn send(
    app: &Router,
    method: Method,
    uri: &str,
    token: Option<&str>,
    content_type: Option<&str>,
    body: impl Into<Body>,
) -> Reply {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(t) = token {
        req = req.header("authorization", format!("Bearer {t}"));
    }
    if let Some(ct) = content_type {
        req = req.header("content-type", ct);
    }
    let resp = app.clone().oneshot(req.body(body.into()).unwrap()).await.unwrap();
    let status = resp.status();
    let headers = resp.headers().clone();
    let body = to_bytes(resp.into_body(), usize::MAX).await.unwrap().to_vec();
    Reply { status, headers, body }
}

pub async fn post_json(app: &Router, uri: &str, token: Option<&str>, body: &Value) -> Reply {
    send(app, Method::POST, uri, token, Some("application/json"), body.to_string()).await
}

pub async fn get(app: &Router, uri: &str, token: &str) -> Reply {
    send(app, Method::GET, uri, Some(token), None, Body::empty()).await
}

pub async fn login(app: &Router, user: &str) -> String {
    let r = post_json(app, "/api/login", None, &serde_json::json!({"username": user, "password": password(user)})).await;
    assert_eq!(r.status, StatusCode::OK, "{}", String::from_utf8_lossy(&r.body));
    r.json()["token"].as_str().unwrap().to_owned()
}

pub fn sample_body() -> Value {
    serde_json::json!({
        "device_id": "s1",
        "captured_at": "2025-01-01T11:30:00Z",
        "temperature": 21.5,
        "humidity": 40,
        "co2": 600,
        "pm1_0": 3,
        "pm2_5": 8.25,
        "pm10": 12
    })
}
