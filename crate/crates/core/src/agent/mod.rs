//! The request → planner → tool call → reply loop.
//!
//! A [`Planner`] sees the conversation and the planner-facing tool specs and
//! either answers or asks for tool calls. [`Agent::run_turn`] executes those
//! calls through the MCP server, after identity enforcement, and feeds the
//! results back until the planner answers or the round cap is hit.

mod conversations;
mod orchestrator;
mod prompt;
pub mod remote;
pub mod scripted;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::openapi::PlannerToolSpec;

pub use conversations::ConversationStore;
pub use orchestrator::{
    grounding_violations, Agent, AgentError, AuditEntry, TurnOutcome, DEFAULT_MAX_ROUNDS, HISTORY_WINDOW,
};
pub use prompt::render_system_prompt;
pub use remote::RemotePlanner;
pub use scripted::{ScriptedPlanner, FALLBACK_TEXT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub id: String,
    pub tool_name: String,
    pub args: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_calls: Option<Vec<ToolCall>>,
}

impl ChatMessage {
    fn plain(role: Role, text: impl Into<String>) -> Self {
        Self {
            role,
            text: text.into(),
            tool_call_id: None,
            tool_calls: None,
        }
    }

    pub fn system(text: impl Into<String>) -> Self {
        Self::plain(Role::System, text)
    }

    pub fn user(text: impl Into<String>) -> Self {
        Self::plain(Role::User, text)
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        Self::plain(Role::Assistant, text)
    }

    pub fn assistant_calls(calls: Vec<ToolCall>) -> Self {
        Self {
            tool_calls: Some(calls),
            ..Self::plain(Role::Assistant, "")
        }
    }

    pub fn tool(call_id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            tool_call_id: Some(call_id.into()),
            ..Self::plain(Role::Tool, text)
        }
    }

    pub fn calls(&self) -> &[ToolCall] {
        self.tool_calls.as_deref().unwrap_or_default()
    }
}

/// What a planner wants next.
#[derive(Debug, Clone, PartialEq)]
pub enum PlannerDecision {
    FinalText(String),
    ToolCalls(Vec<ToolCall>),
}

impl PlannerDecision {
    /// A tool-call decision; an empty list is not a decision.
    pub fn tool_calls(calls: Vec<ToolCall>) -> Option<Self> {
        (!calls.is_empty()).then_some(Self::ToolCalls(calls))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PlannerError {
    #[error("planner unreachable: {0}")]
    Unreachable(String),
    #[error("malformed planner response: {0}")]
    MalformedResponse(String),
}

/// The decision component. Implementations hold no per-conversation state
/// and may be called concurrently.
pub trait Planner: Send + Sync {
    fn decide(&self, messages: &[ChatMessage], tools: &[PlannerToolSpec]) -> Result<PlannerDecision, PlannerError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conversation {
    pub user_id: String,
    pub messages: Vec<ChatMessage>,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
}

impl Conversation {
    pub fn new(user_id: impl Into<String>, now: DateTime<Utc>) -> Self {
        Self {
            user_id: user_id.into(),
            messages: Vec::new(),
            created_at: now,
            updated_at: now,
        }
    }

    /// Plain-text rendering, one message per line, stable across runs.
    pub fn transcript(&self) -> String {
        let mut out = String::new();
        for m in &self.messages {
            let line = match m.role {
                Role::System => format!("[system] {}", m.text),
                Role::User => format!("[user] {}", m.text),
                Role::Assistant if m.tool_calls.is_some() => m
                    .calls()
                    .iter()
                    .map(|c| {
                        format!(
                            "[assistant] call {} {} {}",
                            c.id,
                            c.tool_name,
                            Value::Object(c.args.clone())
                        )
                    })
                    .collect::<Vec<_>>()
                    .join("\n"),
                Role::Assistant => format!("[assistant] {}", m.text),
                Role::Tool => format!("[tool {}] {}", m.tool_call_id.as_deref().unwrap_or("?"), m.text),
            };
            out.push_str(&line.replace('\r', ""));
            out.push('\n');
        }
        out
    }
}
