mod common;

use std::sync::Arc;

use ami_core::agent::{ChatMessage, Planner, PlannerDecision, PlannerError, Role, ToolCall};
use ami_core::openapi::PlannerToolSpec;
use ami_core::timeseries::TimeRange;
use axum::body::Body;
use axum::http::{Method, StatusCode};
use common::*;
use serde_json::{json, Value};

#[tokio::test]
async fn ingest_examples() {
    let h = harness();
    let r = post_json(&h.app, "/sensor_data/", None, &sample_body()).await;
    assert_eq!(r.status, StatusCode::CREATED);
    assert_eq!(r.json(), json!({"stored_id": 1, "warnings": []}));

    let mut body = sample_body();
    body["humidity"] = json!(150);
    let r = post_json(&h.app, "/sensor_data/", None, &body).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    assert_eq!(r.json()["field"], "humidity");

    let mut body = sample_body();
    body["pm2_5"] = json!(20);
    let r = post_json(&h.app, "/sensor_data/", None, &body).await;
    assert_eq!(r.status, StatusCode::CREATED);
    assert_eq!(r.json()["warnings"], json!(["pm-ordering"]));

    let r = send(&h.app, Method::POST, "/sensor_data/", None, Some("text/plain"), sample_body().to_string()).await;
    assert_eq!(r.status, StatusCode::UNSUPPORTED_MEDIA_TYPE);
    let r = send(&h.app, Method::POST, "/sensor_data/", None, Some("application/json"), "{\"device_id\":").await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    let r = send(&h.app, Method::POST, "/sensor_data/", None, Some("application/json"), "[1,2]").await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    assert_eq!(h.state.backend.readings.len(), 2);
}

#[tokio::test]
async fn device_key_is_enforced_when_configured() {
    let h = harness_with(Arc::new(ami_core::agent::ScriptedPlanner::default()), 5, Some("k3y"));
    let r = post_json(&h.app, "/sensor_data/", None, &sample_body()).await;
    assert_eq!(r.status, StatusCode::UNAUTHORIZED);
    let req = axum::http::Request::post("/sensor_data/")
        .header("content-type", "application/json")
        .header("x-device-key", "k3y")
        .body(Body::from(sample_body().to_string()))
        .unwrap();
    let resp = tower::ServiceExt::oneshot(h.app.clone(), req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::CREATED);
}

#[tokio::test]
async fn login_and_session_expiry() {
    let h = harness();
    let token = login(&h.app, "alice").await;
    assert!(token.len() >= 32 && token.chars().all(|c| c.is_ascii_hexdigit()));
    let r = post_json(&h.app, "/api/login", None, &json!({"username": "alice", "password": "wrong"})).await;
    assert_eq!(r.status, StatusCode::UNAUTHORIZED);
    let r = post_json(&h.app, "/api/login", None, &json!({"username": "nobody", "password": "x"})).await;
    assert_eq!(r.status, StatusCode::UNAUTHORIZED);

    assert_eq!(get(&h.app, "/api/issues", &token).await.status, StatusCode::OK);
    h.clock.advance(chrono::Duration::hours(25));
    for uri in ["/api/issues", "/api/profile", "/api/readings/recent", "/api/export.csv"] {
        assert_eq!(get(&h.app, uri, &token).await.status, StatusCode::UNAUTHORIZED, "{uri}");
    }
    let r = post_json(&h.app, "/api/chat", Some(&token), &json!({"message": "hi"})).await;
    assert_eq!(r.status, StatusCode::UNAUTHORIZED);
}

#[tokio::test]
async fn logout_ends_the_session() {
    let h = harness();
    let token = login(&h.app, "bob").await;
    let r = send(&h.app, Method::POST, "/api/logout", Some(&token), None, Body::empty()).await;
    assert_eq!(r.status, StatusCode::NO_CONTENT);
    assert_eq!(get(&h.app, "/api/issues", &token).await.status, StatusCode::UNAUTHORIZED);
}

#[tokio::test]
async fn weather_chat_quotes_the_stored_reading() {
    let h = harness();
    post_json(&h.app, "/sensor_data/", None, &sample_body()).await;
    let token = login(&h.app, "alice").await;
    let r = post_json(&h.app, "/api/chat", Some(&token), &json!({"message": "How's the weather this hour?"})).await;
    assert_eq!(r.status, StatusCode::OK);
    let v = r.json();
    let reply = v["reply"].as_str().unwrap();
    assert!(reply.contains("21.5") && reply.contains("8.25"), "{reply}");
    assert_eq!(v["tool_calls"].as_array().unwrap().len(), 1);
    assert_eq!(v["tool_calls"][0]["name"], "get_recent_sensor_data");

    let r = get(&h.app, "/api/conversation", &token).await;
    let roles: Vec<Value> = r.json()["messages"].as_array().unwrap().iter().map(|m| m["role"].clone()).collect();
    assert_eq!(roles, [json!("user"), json!("assistant"), json!("tool"), json!("assistant")]);
}

#[tokio::test]
async fn chat_errors() {
    let h = harness();
    let token = login(&h.app, "alice").await;
    let r = post_json(&h.app, "/api/chat", Some(&token), &json!({"message": "   "})).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    let r = post_json(&h.app, "/api/chat", None, &json!({"message": "hi"})).await;
    assert_eq!(r.status, StatusCode::UNAUTHORIZED);
    let r = post_json(&h.app, "/api/chat", Some("deadbeef"), &json!({"message": "hi"})).await;
    assert_eq!(r.status, StatusCode::UNAUTHORIZED);

    struct Greedy;
    impl Planner for Greedy {
        fn decide(&self, _: &[ChatMessage], _: &[PlannerToolSpec]) -> Result<PlannerDecision, PlannerError> {
            Ok(PlannerDecision::ToolCalls(vec![ToolCall {
                id: String::new(),
                tool_name: "get_recent_sensor_data".into(),
                args: Default::default(),
            }]))
        }
    }
    let h = harness_with(Arc::new(Greedy), 3, None);
    let token = login(&h.app, "alice").await;
    let r = post_json(&h.app, "/api/chat", Some(&token), &json!({"message": "loop"})).await;
    assert_eq!(r.status, StatusCode::CONFLICT);
    assert_eq!(r.json()["tool_calls"].as_array().unwrap().len(), 3);

    struct Down;
    impl Planner for Down {
        fn decide(&self, _: &[ChatMessage], _: &[PlannerToolSpec]) -> Result<PlannerDecision, PlannerError> {
            Err(PlannerError::Unreachable("connection refused".into()))
        }
    }
    let h = harness_with(Arc::new(Down), 3, None);
    let token = login(&h.app, "alice").await;
    let r = post_json(&h.app, "/api/chat", Some(&token), &json!({"message": "hi"})).await;
    assert_eq!(r.status, StatusCode::BAD_GATEWAY);
}

#[tokio::test]
async fn read_endpoints_mirror_the_store() {
    let h = harness();
    for minute in 0..5 {
        let mut body = sample_body();
        body["captured_at"] = json!(format!("2025-01-01T10:0{minute}:00Z"));
        body["co2"] = json!(500 + minute * 10);
        post_json(&h.app, "/sensor_data/", None, &body).await;
    }
    let token = login(&h.app, "carol").await;
    let store = &h.state.backend.readings;

    let r = get(&h.app, "/api/readings/recent?limit=2", &token).await;
    assert_eq!(r.body, serde_json::to_vec(&store.query_recent(2)).unwrap());
    let r = get(&h.app, "/api/readings/recent", &token).await;
    assert_eq!(r.body, serde_json::to_vec(&store.query_recent(1)).unwrap());
    for bad in ["0", "-1", "abc", "1001"] {
        let r = get(&h.app, &format!("/api/readings/recent?limit={bad}"), &token).await;
        assert_eq!(r.status, StatusCode::BAD_REQUEST, "{bad}");
        assert_eq!(r.json()["field"], "limit");
    }

    let uri = "/api/readings/range?start=2025-01-01T10:01:00Z&end=2025-01-01T10:03:00Z";
    let range = TimeRange::new(
        "2025-01-01T10:01:00Z".parse().unwrap(),
        "2025-01-01T10:03:00Z".parse().unwrap(),
    )
    .unwrap();
    let r = get(&h.app, uri, &token).await;
    assert_eq!(r.body, serde_json::to_vec(&store.query_range(&range)).unwrap());
    assert_eq!(r.json().as_array().unwrap().len(), 3);

    let r = get(&h.app, "/api/readings/aggregate?field=co2", &token).await;
    assert_eq!(r.json(), json!({"field_name": "co2", "count": 5, "min": 500.0, "max": 540.0, "mean": 520.0}));
    let r = get(&h.app, "/api/readings/aggregate?field=pm99", &token).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    let r = get(&h.app, "/api/readings/range?start=2025-02-01T00:00:00Z&end=2025-01-01T00:00:00Z", &token).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);

    let r = get(&h.app, "/api/export.csv", &token).await;
    assert_eq!(r.body, store.export_csv(&TimeRange::everything()));
    assert!(r.headers["content-type"].to_str().unwrap().starts_with("text/csv"));
    let r = get(&h.app, "/api/export.csv?start=1735725660&end=1735725780", &token).await;
    assert_eq!(r.body, store.export_csv(&range));
}

#[tokio::test]
async fn issues_are_per_user() {
    let h = harness();
    let alice = login(&h.app, "alice").await;
    let bob = login(&h.app, "bob").await;
    for (token, text) in [(&alice, "sensor is stuck"), (&bob, "screen is broken"), (&alice, "report: noisy fan")] {
        let r = post_json(&h.app, "/api/chat", Some(token), &json!({"message": text})).await;
        assert_eq!(r.status, StatusCode::OK);
    }
    let ids = |v: Value| -> Vec<u64> { v.as_array().unwrap().iter().map(|t| t["id"].as_u64().unwrap()).collect() };
    assert_eq!(ids(get(&h.app, "/api/issues", &alice).await.json()), [1, 3]);
    assert_eq!(ids(get(&h.app, "/api/issues", &bob).await.json()), [2]);
    assert_eq!(ids(get(&h.app, "/api/issues", &login(&h.app, "carol").await).await.json()), Vec::<u64>::new());
}

#[tokio::test]
async fn profile_updates_apply_to_the_session_user_only() {
    let h = harness();
    let alice = login(&h.app, "alice").await;
    let r = send(
        &h.app,
        Method::PUT,
        "/api/profile",
        Some(&alice),
        Some("application/json"),
        json!({"user_id": "bob", "display_name": "Alice A."}).to_string(),
    )
    .await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.json()["user_id"], "alice");
    assert_eq!(r.json()["display_name"], "Alice A.");
    assert_eq!(h.state.backend.profiles.get("bob").unwrap().display_name, "bob");

    let r = send(
        &h.app,
        Method::PUT,
        "/api/profile",
        Some(&alice),
        Some("application/json"),
        json!({"email": "no-at-sign"}).to_string(),
    )
    .await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    let r = get(&h.app, "/api/profile", &alice).await;
    assert_eq!(r.json()["email"], "alice@example.org");
    assert_eq!(r.json()["display_name"], "Alice A.");
}

#[tokio::test]
async fn openapi_document_lists_four_tools() {
    let h = harness();
    let r = send(&h.app, Method::GET, "/api/openapi.json", None, None, Body::empty()).await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.json()["paths"].as_object().unwrap().len(), 4);
}

#[tokio::test]
async fn mcp_over_http() {
    let h = harness();
    let token = login(&h.app, "alice").await;
    let list = json!({"jsonrpc": "2.0", "id": 1, "method": "tools/list"});
    assert_eq!(post_json(&h.app, "/mcp", None, &list).await.status, StatusCode::UNAUTHORIZED);
    let r = post_json(&h.app, "/mcp", Some(&token), &list).await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.json()["result"]["tools"].as_array().unwrap().len(), 4);

    let note = json!({"jsonrpc": "2.0", "method": "notifications/initialized"});
    let r = post_json(&h.app, "/mcp", Some(&token), &note).await;
    assert_eq!(r.status, StatusCode::ACCEPTED);
    assert!(r.body.is_empty());

    let r = send(&h.app, Method::POST, "/mcp", Some(&token), Some("application/json"), "not json").await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    assert_eq!(r.json()["error"]["code"], -32700);
    let r = post_json(&h.app, "/mcp", Some(&token), &json!({"jsonrpc": "2.0", "id": 2, "method": "nope"})).await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.json()["error"]["code"], -32601);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_chats_by_one_user_serialize() {
    let h = harness();
    post_json(&h.app, "/sensor_data/", None, &sample_body()).await;
    let token = login(&h.app, "alice").await;
    let mut tasks = Vec::new();
    for i in 0..12 {
        let (app, token) = (h.app.clone(), token.clone());
        tasks.push(tokio::spawn(async move {
            let msg = if i % 2 == 0 { "how is the air quality?" } else { "hello" };
            post_json(&app, "/api/chat", Some(&token), &json!({"message": msg})).await.status
        }));
    }
    for t in tasks {
        assert_eq!(t.await.unwrap(), StatusCode::OK);
    }
    let conv = h.state.conversations.snapshot("alice").unwrap();
    // each user message is followed by its own complete turn
    let mut i = 1;
    while i < conv.messages.len() {
        assert_eq!(conv.messages[i].role, Role::User);
        let weather = conv.messages[i].text.contains("air");
        let turn_len = if weather { 4 } else { 2 };
        let roles: Vec<Role> = conv.messages[i + 1..i + turn_len].iter().map(|m| m.role).collect();
        let expected: &[Role] = if weather {
            &[Role::Assistant, Role::Tool, Role::Assistant]
        } else {
            &[Role::Assistant]
        };
        assert_eq!(roles, expected);
        i += turn_len;
    }
    assert_eq!(i, conv.messages.len());
}
