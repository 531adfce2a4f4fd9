use std::borrow::Cow;
use std::collections::HashSet;
use std::sync::{Arc, OnceLock};

use regex::Regex;
use serde::Serialize;
use serde_json::{json, Value};

use super::prompt::render_system_prompt;
use super::{ChatMessage, Conversation, Planner, PlannerDecision, PlannerError, Role, ToolCall};
use crate::mcp::{McpServer, ToolResult};
use crate::openapi::{openapi_to_planner_specs, registry_to_openapi, PlannerToolSpec};
use crate::tools::identity::enforce_call;

pub const DEFAULT_MAX_ROUNDS: usize = 5;
/// Non-system messages sent to the planner per query.
pub const HISTORY_WINDOW: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditEntry {
    pub call: ToolCall,
    pub result: ToolResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TurnOutcome {
    pub reply: String,
    pub audit: Vec<AuditEntry>,
    pub planner_queries: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error("unknown user `{0}`")]
    UnknownUser(String),
    #[error("message must not be empty")]
    EmptyMessage,
    #[error("conversation belongs to `{owner}`, not `{caller}`")]
    WrongOwner { owner: String, caller: String },
    #[error("no final answer after {max_rounds} planner queries")]
    LoopExceeded { max_rounds: usize, audit: Vec<AuditEntry> },
    #[error(transparent)]
    Planner(#[from] PlannerError),
}

type UserCheck = dyn Fn(&str) -> bool + Send + Sync;

/// Runs turns against one MCP server.
#[derive(Clone)]
pub struct Agent {
    server: McpServer,
    is_known_user: Arc<UserCheck>,
}

impl Agent {
    pub fn new(server: McpServer, is_known_user: impl Fn(&str) -> bool + Send + Sync + 'static) -> Self {
        Self {
            server,
            is_known_user: Arc::new(is_known_user),
        }
    }

    pub fn server(&self) -> &McpServer {
        &self.server
    }

    pub fn build_system_prompt(&self, user_id: &str) -> Result<String, AgentError> {
        if !(self.is_known_user)(user_id) {
            return Err(AgentError::UnknownUser(user_id.to_owned()));
        }
        Ok(render_system_prompt(user_id))
    }

    /// Current planner-facing tool specs, derived through the OpenAPI document.
    pub fn tool_specs(&self) -> Vec<PlannerToolSpec> {
        openapi_to_planner_specs(&registry_to_openapi(self.server.registry().definitions()))
            .expect("generated document is well formed")
    }

    pub fn run_turn(
        &self,
        conversation: &mut Conversation,
        user_text: &str,
        planner: &dyn Planner,
        max_rounds: usize,
    ) -> Result<TurnOutcome, AgentError> {
        let user = conversation.user_id.clone();
        let prompt = self.build_system_prompt(&user)?;
        if user_text.trim().is_empty() {
            return Err(AgentError::EmptyMessage);
        }
        match conversation.messages.first() {
            Some(m) if m.role == Role::System => {}
            _ => conversation.messages.insert(0, ChatMessage::system(prompt)),
        }
        conversation.messages.push(ChatMessage::user(user_text));

        let mut used_ids: HashSet<String> = conversation
            .messages
            .iter()
            .flat_map(|m| m.calls().iter().map(|c| c.id.clone()))
            .collect();
        let mut audit = Vec::new();
        for round in 1..=max_rounds {
            let specs = self.tool_specs();
            let decision = planner.decide(&planner_window(&conversation.messages), &specs)?;
            let calls = match decision {
                PlannerDecision::FinalText(text) => {
                    conversation.messages.push(ChatMessage::assistant(text.clone()));
                    return Ok(TurnOutcome {
                        reply: text,
                        audit,
                        planner_queries: round,
                    });
                }
                PlannerDecision::ToolCalls(calls) if calls.is_empty() => {
                    return Err(PlannerError::MalformedResponse("empty tool call list".into()).into());
                }
                PlannerDecision::ToolCalls(calls) => calls,
            };
            let mut executed = Vec::with_capacity(calls.len());
            for mut call in calls {
                if call.id.is_empty() || used_ids.contains(&call.id) {
                    call.id = fresh_id(&used_ids);
                }
                used_ids.insert(call.id.clone());
                let enforced = enforce_call(self.server.registry(), &call.tool_name, call.args.clone(), &user);
                if let Ok(args) = enforced.as_ref() {
                    call.args = args.clone();
                }
                executed.push((call, enforced.is_ok()));
            }
            conversation.messages.push(ChatMessage::assistant_calls(
                executed.iter().map(|(c, _)| c.clone()).collect(),
            ));
            for (call, known) in executed {
                let result = if known {
                    self.dispatch(&call, &user)
                } else {
                    ToolResult::error(format!("unknown tool `{}`", call.tool_name))
                };
                let text = serde_json::to_string(&result).expect("tool result serializes");
                conversation.messages.push(ChatMessage::tool(call.id.clone(), text));
                audit.push(AuditEntry { call, result });
            }
        }
        conversation.messages.push(ChatMessage::assistant(format!(
            "I could not complete this request within {max_rounds} planning rounds."
        )));
        Err(AgentError::LoopExceeded { max_rounds, audit })
    }

    // Every tool execution goes through tools/call on the MCP server.
    fn dispatch(&self, call: &ToolCall, user: &str) -> ToolResult {
        let request = json!({
            "jsonrpc": "2.0",
            "id": call.id,
            "method": "tools/call",
            "params": {"name": call.tool_name, "arguments": Value::Object(call.args.clone())},
        });
        let response = self
            .server
            .dispatch(&request, user)
            .expect("requests with an id always get a response");
        if let Some(err) = response.error {
            return ToolResult::error(err.message);
        }
        response
            .result
            .as_ref()
            .and_then(ToolResult::from_call_result)
            .unwrap_or_else(|| ToolResult::error("tool returned an unreadable result"))
    }
}

fn fresh_id(used: &HashSet<String>) -> String {
    (used.len() + 1..)
        .map(|n| format!("call_{n}"))
        .find(|id| !used.contains(id))
        .expect("unbounded range")
}

/// System message plus at most [`HISTORY_WINDOW`] later messages, starting at
/// a user message so no tool result is separated from its call.
fn planner_window(messages: &[ChatMessage]) -> Cow<'_, [ChatMessage]> {
    if messages.len() <= HISTORY_WINDOW + 1 {
        return Cow::Borrowed(messages);
    }
    let mut start = messages.len() - HISTORY_WINDOW;
    while start + 1 < messages.len() && messages[start].role != Role::User {
        start += 1;
    }
    let mut window = Vec::with_capacity(messages.len() - start + 1);
    window.push(messages[0].clone());
    window.extend_from_slice(&messages[start..]);
    Cow::Owned(window)
}

fn number_token() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"-?[0-9]+(?:\.[0-9]+)?").expect("static regex"))
}

/// Numbers in `reply` that do not appear verbatim in any of the results.
///
/// Digits glued to a preceding letter, digit, `_` or `.` (as in `PM2.5` or
/// `CO2`) belong to a name, not a measurement, and are skipped.
pub fn grounding_violations(reply: &str, results: &[ToolResult]) -> Vec<String> {
    let corpus: Vec<String> = results
        .iter()
        .map(|r| serde_json::to_string(&r.content).expect("JSON value serializes"))
        .collect();
    let bytes = reply.as_bytes();
    number_token()
        .find_iter(reply)
        .filter(|m| {
            let prev = reply[..m.start()].chars().next_back();
            !prev.is_some_and(|c| c.is_alphanumeric() || c == '_' || c == '.')
                && !(bytes[m.start()] == b'-' && prev.is_some_and(|c| c.is_ascii_digit()))
        })
        .map(|m| m.as_str().to_owned())
        .filter(|tok| !corpus.iter().any(|c| c.contains(tok.as_str())))
        .collect()
}
