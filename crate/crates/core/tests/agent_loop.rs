use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use ami_core::agent::{
    grounding_violations, Agent, AgentError, ChatMessage, Conversation, Planner, PlannerDecision, PlannerError,
    Role, ScriptedPlanner, ToolCall, DEFAULT_MAX_ROUNDS, FALLBACK_TEXT, HISTORY_WINDOW,
};
use ami_core::mcp::McpServer;
use ami_core::openapi::PlannerToolSpec;
use ami_core::tools::profiles::UserProfile;
use ami_core::tools::AmiBackend;
use ami_core::{FixedClock, SensorReading};
use chrono::{TimeZone, Utc};
use parking_lot::Mutex;
use serde_json::{json, Value};

fn rules() -> ScriptedPlanner {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../config/rules.txt");
    ScriptedPlanner::from_file(&path).unwrap()
}

fn profile(user: &str) -> UserProfile {
    UserProfile {
        user_id: user.into(),
        display_name: user.into(),
        email: format!("{user}@example.org"),
        notification_threshold_pm2_5: None,
    }
}

fn setup() -> (AmiBackend, Agent) {
    let clock = Arc::new(FixedClock::new(Utc.with_ymd_and_hms(2025, 1, 1, 12, 0, 0).unwrap()));
    let backend = AmiBackend::in_memory([profile("alice"), profile("bob")], clock);
    let profiles = backend.profiles.clone();
    let agent = Agent::new(McpServer::new(backend.registry()), move |u| profiles.contains(u));
    (backend, agent)
}

fn seed_reading(backend: &AmiBackend) -> SensorReading {
    let r = SensorReading::new(
        "s1",
        Utc.with_ymd_and_hms(2025, 1, 1, 11, 30, 0).unwrap(),
        21.5,
        40.0,
        600.0,
        3.0,
        8.25,
        12.0,
    );
    backend.readings.insert(r.clone()).unwrap();
    r
}

fn conversation(user: &str) -> Conversation {
    Conversation::new(user, Utc.with_ymd_and_hms(2025, 1, 1, 12, 0, 0).unwrap())
}

fn call(id: &str, tool: &str, args: Value) -> ToolCall {
    ToolCall {
        id: id.into(),
        tool_name: tool.into(),
        args: args.as_object().cloned().unwrap_or_default(),
    }
}

/// Replays a fixed list of decisions and records every message list it saw.
struct Replay {
    decisions: Vec<PlannerDecision>,
    seen: Mutex<Vec<Vec<ChatMessage>>>,
}

impl Replay {
    fn new(decisions: Vec<PlannerDecision>) -> Self {
        Self { decisions, seen: Mutex::new(Vec::new()) }
    }
}

impl Planner for Replay {
    fn decide(&self, messages: &[ChatMessage], _: &[PlannerToolSpec]) -> Result<PlannerDecision, PlannerError> {
        let mut seen = self.seen.lock();
        let idx = seen.len();
        seen.push(messages.to_vec());
        Ok(self.decisions[idx.min(self.decisions.len() - 1)].clone())
    }
}

#[test]
fn weather_turn_is_one_grounded_call() {
    let (backend, agent) = setup();
    let reading = seed_reading(&backend);
    let mut conv = conversation("alice");
    let out = agent
        .run_turn(&mut conv, "How's the weather this hour?", &rules(), DEFAULT_MAX_ROUNDS)
        .unwrap();
    assert_eq!(out.audit.len(), 1);
    assert_eq!(out.audit[0].call.tool_name, "get_recent_sensor_data");
    assert_eq!(out.planner_queries, 2);
    let results: Vec<_> = out.audit.iter().map(|a| a.result.clone()).collect();
    assert_eq!(grounding_violations(&out.reply, &results), Vec::<String>::new());
    assert!(out.reply.contains(&reading.temperature.to_string()), "{}", out.reply);
    assert!(out.reply.contains("8.25"), "{}", out.reply);
    assert_eq!(conv.messages.last().unwrap().text, out.reply);
}

#[test]
fn weather_transcript_is_deterministic() {
    let run = || {
        let (backend, agent) = setup();
        seed_reading(&backend);
        let mut conv = conversation("alice");
        agent.run_turn(&mut conv, "How's the weather this hour?", &rules(), 5).unwrap();
        conv.transcript()
    };
    assert_eq!(run(), run());
}

#[test]
fn issue_report_names_the_ticket() {
    let (_, agent) = setup();
    let mut conv = conversation("bob");
    let out = agent.run_turn(&mut conv, "the PM sensor looks stuck", &rules(), 5).unwrap();
    assert_eq!(out.audit.len(), 1);
    assert_eq!(out.audit[0].call.tool_name, "report_issue");
    assert!(out.reply.contains("Issue #1"), "{}", out.reply);
    assert_eq!(out.audit[0].result.content["reporter_user_id"], "bob");
}

#[test]
fn profile_rules_update_only_the_session_user() {
    let (backend, agent) = setup();
    let mut conv = conversation("alice");
    let out = agent
        .run_turn(&mut conv, "Please set my email to alice@new.example", &rules(), 5)
        .unwrap();
    assert_eq!(out.reply, "Your profile email is now alice@new.example.");
    assert_eq!(backend.profiles.get("alice").unwrap().email, "alice@new.example");
    assert_eq!(backend.profiles.get("bob").unwrap().email, "bob@example.org");

    let out = agent.run_turn(&mut conv, "notify me above 35 please", &rules(), 5).unwrap();
    assert_eq!(backend.profiles.get("alice").unwrap().notification_threshold_pm2_5, Some(35.0));
    assert!(grounding_violations(&out.reply, &[out.audit[0].result.clone()]).is_empty(), "{}", out.reply);

    let out = agent.run_turn(&mut conv, "change my email to nope", &rules(), 5).unwrap();
    assert!(out.audit.is_empty(), "no address, so the email rule does not fire");
    assert_eq!(out.reply, FALLBACK_TEXT);
}

#[test]
fn unmatched_message_gets_fallback_without_calls() {
    let (_, agent) = setup();
    let mut conv = conversation("alice");
    let out = agent.run_turn(&mut conv, "tell me a joke", &rules(), 5).unwrap();
    assert_eq!(out.reply, FALLBACK_TEXT);
    assert!(out.audit.is_empty());
    assert_eq!(out.planner_queries, 1);
}

#[test]
fn always_calling_planner_hits_the_cap() {
    struct Greedy(AtomicUsize);
    impl Planner for Greedy {
        fn decide(&self, _: &[ChatMessage], _: &[PlannerToolSpec]) -> Result<PlannerDecision, PlannerError> {
            self.0.fetch_add(1, Ordering::SeqCst);
            Ok(PlannerDecision::ToolCalls(vec![call("", "get_recent_sensor_data", json!({}))]))
        }
    }
    for max_rounds in [1, 3, DEFAULT_MAX_ROUNDS, 8] {
        let (_, agent) = setup();
        let planner = Greedy(AtomicUsize::new(0));
        let mut conv = conversation("alice");
        let err = agent.run_turn(&mut conv, "loop", &planner, max_rounds).unwrap_err();
        assert_eq!(planner.0.load(Ordering::SeqCst), max_rounds);
        match err {
            AgentError::LoopExceeded { max_rounds: m, audit } => {
                assert_eq!(m, max_rounds);
                assert_eq!(audit.len(), max_rounds);
            }
            other => panic!("{other:?}"),
        }
        let last = conv.messages.last().unwrap();
        assert_eq!(last.role, Role::Assistant);
        assert!(last.tool_calls.is_none());
        let ids: std::collections::HashSet<_> = conv.messages.iter().flat_map(|m| m.calls()).map(|c| &c.id).collect();
        assert_eq!(ids.len(), max_rounds, "call ids are unique");
    }
}

#[test]
fn two_calls_in_one_decision_run_in_order() {
    let (backend, agent) = setup();
    seed_reading(&backend);
    let planner = Replay::new(vec![
        PlannerDecision::ToolCalls(vec![
            call("a", "report_issue", json!({"description": "first"})),
            call("b", "get_recent_sensor_data", json!({"limit": 1})),
        ]),
        PlannerDecision::FinalText("done".into()),
    ]);
    let mut conv = conversation("alice");
    let out = agent.run_turn(&mut conv, "go", &planner, 5).unwrap();
    let names: Vec<_> = out.audit.iter().map(|a| a.call.tool_name.as_str()).collect();
    assert_eq!(names, ["report_issue", "get_recent_sensor_data"]);

    let seen = planner.seen.lock();
    let second = &seen[1];
    let tail: Vec<_> = second[second.len() - 3..].iter().map(|m| (m.role, m.tool_call_id.clone())).collect();
    assert_eq!(
        tail,
        [(Role::Assistant, None), (Role::Tool, Some("a".into())), (Role::Tool, Some("b".into()))]
    );
    assert!(second[second.len() - 2].text.contains("\"id\":1"));
}

#[test]
fn unknown_tool_is_a_soft_error() {
    let (_, agent) = setup();
    let planner = Replay::new(vec![
        PlannerDecision::ToolCalls(vec![call("x", "delete_everything", json!({}))]),
        PlannerDecision::FinalText("sorry".into()),
    ]);
    let mut conv = conversation("alice");
    let out = agent.run_turn(&mut conv, "go", &planner, 5).unwrap();
    assert_eq!(out.reply, "sorry");
    assert!(out.audit[0].result.is_error);
    assert!(out.audit[0].result.error_message().unwrap().contains("delete_everything"));
}

#[test]
fn schema_violations_come_back_as_tool_errors() {
    let (_, agent) = setup();
    let planner = Replay::new(vec![
        PlannerDecision::ToolCalls(vec![call("x", "get_recent_sensor_data", json!({"limit": "many"}))]),
        PlannerDecision::FinalText("ok".into()),
    ]);
    let mut conv = conversation("alice");
    let out = agent.run_turn(&mut conv, "go", &planner, 5).unwrap();
    assert!(out.audit[0].result.is_error);
    assert!(out.audit[0].result.error_message().unwrap().contains("limit"));
}

#[test]
fn foreign_identity_is_overwritten_before_dispatch() {
    let (backend, agent) = setup();
    let planner = Replay::new(vec![
        PlannerDecision::ToolCalls(vec![
            call("1", "report_issue", json!({"description": "x", "user_id": "bob"})),
            call("2", "update_user_profile", json!({"user_id": "bob", "display_name": "pwned"})),
        ]),
        PlannerDecision::FinalText("ok".into()),
    ]);
    let mut conv = conversation("alice");
    let out = agent.run_turn(&mut conv, "go", &planner, 5).unwrap();
    for entry in &out.audit {
        assert_eq!(entry.call.args["user_id"], "alice");
    }
    assert_eq!(backend.issues.all()[0].reporter_user_id, "alice");
    assert_eq!(backend.profiles.get("alice").unwrap().display_name, "pwned");
    assert_eq!(backend.profiles.get("bob").unwrap().display_name, "bob");
    let recorded = conv.messages.iter().flat_map(|m| m.calls()).all(|c| c.args["user_id"] == "alice");
    assert!(recorded, "the conversation records the enforced arguments");
}

#[test]
fn planner_sees_a_bounded_window() {
    let (_, agent) = setup();
    let planner = Replay::new(vec![PlannerDecision::FinalText("ok".into())]);
    let mut conv = conversation("alice");
    for i in 0..60 {
        agent.run_turn(&mut conv, &format!("message {i}"), &planner, 5).unwrap();
    }
    let seen = planner.seen.lock();
    let last = seen.last().unwrap();
    assert!(last.len() <= HISTORY_WINDOW + 1, "{}", last.len());
    assert_eq!(last[0].role, Role::System);
    assert_eq!(last[1].role, Role::User);
    assert_eq!(last.last().unwrap().text, "message 59");
    assert_eq!(conv.messages.len(), 1 + 120);
}

#[test]
fn planner_failures_and_bad_input_propagate() {
    struct Down;
    impl Planner for Down {
        fn decide(&self, _: &[ChatMessage], _: &[PlannerToolSpec]) -> Result<PlannerDecision, PlannerError> {
            Err(PlannerError::Unreachable("connection refused".into()))
        }
    }
    let (_, agent) = setup();
    let mut conv = conversation("alice");
    assert!(matches!(
        agent.run_turn(&mut conv, "hi", &Down, 5),
        Err(AgentError::Planner(PlannerError::Unreachable(_)))
    ));
    assert!(matches!(agent.run_turn(&mut conv, "  ", &Down, 5), Err(AgentError::EmptyMessage)));
    let mut stranger = conversation("mallory");
    assert!(matches!(agent.run_turn(&mut stranger, "hi", &Down, 5), Err(AgentError::UnknownUser(_))));

    let empty = Replay::new(vec![PlannerDecision::ToolCalls(vec![])]);
    assert!(matches!(
        agent.run_turn(&mut conv, "hi", &empty, 5),
        Err(AgentError::Planner(PlannerError::MalformedResponse(_)))
    ));
}

#[test]
fn grounding_check_ignores_names_and_catches_invented_numbers() {
    let result = ami_core::mcp::ToolResult::ok(json!({"pm2_5": 8.25, "co2": 600.0}));
    let results = [result];
    assert!(grounding_violations("PM2.5 is 8.25 and CO2 is 600.0", &results).is_empty());
    assert_eq!(grounding_violations("PM2.5 is 9.1", &results), ["9.1"]);
}
