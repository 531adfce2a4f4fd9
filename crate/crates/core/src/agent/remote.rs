//! Planner backed by an OpenAI-compatible chat-completions endpoint.

use std::time::Duration;

use serde_json::{json, Map, Value};

use super::{ChatMessage, Planner, PlannerDecision, PlannerError, Role, ToolCall};
use crate::openapi::PlannerToolSpec;

const RETRIES: u32 = 2;

#[derive(Debug, Clone)]
pub struct RemotePlanner {
    endpoint: String,
    api_key: Option<String>,
    model: String,
    backoff: Duration,
    timeout: Duration,
}

impl RemotePlanner {
    /// `endpoint` is the API base, e.g. `https://api.example.com/v1`; requests
    /// go to `<endpoint>/chat/completions`.
    pub fn new(endpoint: impl Into<String>, api_key: Option<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            api_key,
            model: model.into(),
            backoff: Duration::from_millis(500),
            timeout: Duration::from_secs(60),
        }
    }

    /// Base delay; retry `n` waits `backoff * 2^n`.
    pub fn with_backoff(mut self, backoff: Duration) -> Self {
        self.backoff = backoff;
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    fn url(&self) -> String {
        format!("{}/chat/completions", self.endpoint.trim_end_matches('/'))
    }

    pub fn request_body(&self, messages: &[ChatMessage], tools: &[PlannerToolSpec]) -> Value {
        let mut body = json!({
            "model": self.model,
            "messages": to_wire_messages(messages),
        });
        if !tools.is_empty() {
            body["tools"] = to_wire_tools(tools);
        }
        body
    }
}

impl Planner for RemotePlanner {
    fn decide(&self, messages: &[ChatMessage], tools: &[PlannerToolSpec]) -> Result<PlannerDecision, PlannerError> {
        let body = self.request_body(messages, tools);
        // built per call: a blocking client must not be dropped inside an async runtime
        let client = reqwest::blocking::Client::builder()
            .timeout(self.timeout)
            .build()
            .map_err(|e| PlannerError::Unreachable(e.to_string()))?;
        let mut last_error = String::new();
        for attempt in 0..=RETRIES {
            if attempt > 0 {
                std::thread::sleep(self.backoff * 2u32.pow(attempt - 1));
            }
            let mut req = client.post(self.url()).json(&body);
            if let Some(key) = &self.api_key {
                req = req.bearer_auth(key);
            }
            match req.send() {
                Ok(resp) => {
                    let status = resp.status();
                    if status.is_server_error() || status.as_u16() == 429 {
                        last_error = format!("HTTP {status}");
                        continue;
                    }
                    if !status.is_success() {
                        let text = resp.text().unwrap_or_default();
                        return Err(PlannerError::Unreachable(format!("HTTP {status}: {text}")));
                    }
                    let wire: Value = resp
                        .json()
                        .map_err(|e| PlannerError::MalformedResponse(e.to_string()))?;
                    return decision_from_wire(&wire);
                }
                Err(e) => last_error = e.to_string(),
            }
        }
        Err(PlannerError::Unreachable(format!(
            "{} failed after {} attempts: {last_error}",
            self.url(),
            RETRIES + 1
        )))
    }
}

pub fn to_wire_messages(messages: &[ChatMessage]) -> Value {
    Value::Array(
        messages
            .iter()
            .map(|m| match m.role {
                Role::System => json!({"role": "system", "content": m.text}),
                Role::User => json!({"role": "user", "content": m.text}),
                Role::Assistant if m.tool_calls.is_some() => json!({
                    "role": "assistant",
                    "content": if m.text.is_empty() { Value::Null } else { Value::String(m.text.clone()) },
                    "tool_calls": m.calls().iter().map(|c| json!({
                        "id": c.id,
                        "type": "function",
                        "function": {
                            "name": c.tool_name,
                            "arguments": Value::Object(c.args.clone()).to_string(),
                        }
                    })).collect::<Vec<_>>(),
                }),
                Role::Assistant => json!({"role": "assistant", "content": m.text}),
                Role::Tool => json!({
                    "role": "tool",
                    "tool_call_id": m.tool_call_id,
                    "content": m.text,
                }),
            })
            .collect(),
    )
}

pub fn to_wire_tools(tools: &[PlannerToolSpec]) -> Value {
    Value::Array(
        tools
            .iter()
            .map(|t| {
                json!({
                    "type": "function",
                    "function": {
                        "name": t.name,
                        "description": t.description,
                        "parameters": t.parameters,
                    }
                })
            })
            .collect(),
    )
}

/// Map a chat-completions response onto a decision. Tool calls win over
/// content when both are present.
pub fn decision_from_wire(wire: &Value) -> Result<PlannerDecision, PlannerError> {
    let malformed = |m: &str| PlannerError::MalformedResponse(m.to_owned());
    let message = wire
        .get("choices")
        .and_then(|c| c.get(0))
        .and_then(|c| c.get("message"))
        .ok_or_else(|| malformed("missing choices[0].message"))?;
    if let Some(calls) = message.get("tool_calls").and_then(Value::as_array) {
        if !calls.is_empty() {
            let mut out = Vec::with_capacity(calls.len());
            for (i, call) in calls.iter().enumerate() {
                let function = call.get("function").ok_or_else(|| malformed("tool call without function"))?;
                let name = function
                    .get("name")
                    .and_then(Value::as_str)
                    .ok_or_else(|| malformed("tool call without function name"))?;
                let args = match function.get("arguments") {
                    None | Some(Value::Null) => Map::new(),
                    Some(Value::String(s)) if s.trim().is_empty() => Map::new(),
                    Some(Value::String(s)) => match serde_json::from_str::<Value>(s) {
                        Ok(Value::Object(m)) => m,
                        _ => return Err(malformed("tool call arguments are not a JSON object")),
                    },
                    Some(Value::Object(m)) => m.clone(),
                    Some(_) => return Err(malformed("tool call arguments are not a JSON object")),
                };
                let id = call
                    .get("id")
                    .and_then(Value::as_str)
                    .map(str::to_owned)
                    .unwrap_or_else(|| format!("call_{}", i + 1));
                out.push(ToolCall {
                    id,
                    tool_name: name.to_owned(),
                    args,
                });
            }
            return Ok(PlannerDecision::ToolCalls(out));
        }
    }
    match message.get("content") {
        Some(Value::String(text)) => Ok(PlannerDecision::FinalText(text.clone())),
        _ => Err(malformed("message has neither content nor tool_calls")),
    }
}
