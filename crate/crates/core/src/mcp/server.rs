use std::io::{self, BufRead, Write};
use std::panic::{self, AssertUnwindSafe};
use std::sync::Arc;

use serde_json::{json, Map, Value};

use super::jsonrpc::{ErrorCode, RpcError, RpcId, RpcResponse};
use super::registry::{ToolRegistry, ToolResult};
use super::schema;
use crate::tools::identity::enforce_identity;

pub const PROTOCOL_VERSION: &str = "ami-mcp/1";
pub const SERVER_NAME: &str = "ami";

/// Transport-independent MCP message handler over an immutable registry.
#[derive(Debug, Clone)]
pub struct McpServer {
    registry: Arc<ToolRegistry>,
}

enum Parsed {
    Request { id: RpcId, method: String, params: Option<Value> },
    Notification { method: String, params: Option<Value> },
}

impl McpServer {
    pub fn new(registry: ToolRegistry) -> Self {
        Self {
            registry: Arc::new(registry),
        }
    }

    pub fn registry(&self) -> &ToolRegistry {
        &self.registry
    }

    /// Handle one framed message. Returns `None` for notifications.
    pub fn handle_message(&self, raw: &[u8], caller: &str) -> Option<Vec<u8>> {
        let response = match serde_json::from_slice::<Value>(raw) {
            Ok(v) => self.dispatch(&v, caller)?,
            Err(e) => RpcResponse::failure(
                RpcId::Null,
                RpcError::new(ErrorCode::ParseError, format!("parse error: {e}")),
            ),
        };
        Some(response.to_bytes())
    }

    /// Handle one already-decoded message.
    pub fn dispatch(&self, message: &Value, caller: &str) -> Option<RpcResponse> {
        match parse_envelope(message) {
            Err((id, error)) => Some(RpcResponse::failure(id, error)),
            Ok(Parsed::Notification { method, params }) => {
                // notifications never produce a response, even on failure
                let _ = self.invoke(&method, params.as_ref(), caller);
                None
            }
            Ok(Parsed::Request { id, method, params }) => Some(match self.invoke(&method, params.as_ref(), caller) {
                Ok(result) => RpcResponse::success(id, result),
                Err(error) => RpcResponse::failure(id, error),
            }),
        }
    }

    fn invoke(&self, method: &str, params: Option<&Value>, caller: &str) -> Result<Value, RpcError> {
        let params = match params {
            None | Some(Value::Null) => None,
            Some(Value::Object(m)) => Some(m),
            Some(_) => {
                return Err(RpcError::new(ErrorCode::InvalidParams, "params must be an object"));
            }
        };
        match method {
            "initialize" => Ok(json!({
                "protocolVersion": PROTOCOL_VERSION,
                "serverInfo": {"name": SERVER_NAME, "version": env!("CARGO_PKG_VERSION")},
                "capabilities": {"tools": {"listChanged": false}},
            })),
            "ping" => Ok(json!({})),
            "notifications/initialized" => Ok(Value::Null),
            "tools/list" => Ok(json!({ "tools": self.registry.definitions().collect::<Vec<_>>() })),
            "tools/call" => self.tools_call(params, caller).map(|r| r.to_call_result()),
            other => Err(RpcError::new(
                ErrorCode::MethodNotFound,
                format!("method not found: {other}"),
            )),
        }
    }

    fn tools_call(&self, params: Option<&Map<String, Value>>, caller: &str) -> Result<ToolResult, RpcError> {
        let invalid = |m: String| RpcError::new(ErrorCode::InvalidParams, m);
        let params = params.ok_or_else(|| invalid("tools/call requires params".into()))?;
        let name = params
            .get("name")
            .and_then(Value::as_str)
            .ok_or_else(|| invalid("tools/call requires a string `name`".into()))?;
        let args = match params.get("arguments") {
            None | Some(Value::Null) => Map::new(),
            Some(Value::Object(a)) => a.clone(),
            Some(_) => return Err(invalid("`arguments` must be an object".into())),
        };
        self.call_tool(name, args, caller)
    }

    /// Identity enforcement, schema gate, then the handler.
    pub fn call_tool(&self, name: &str, args: Map<String, Value>, caller: &str) -> Result<ToolResult, RpcError> {
        let definition = self.registry.definition(name).ok_or_else(|| {
            RpcError::new(ErrorCode::InvalidParams, format!("unknown tool `{name}`"))
                .with_data(json!({"tool": name}))
        })?;
        let args = enforce_identity(definition, args, caller);
        let args_value = Value::Object(args);
        schema::validate_args(&definition.parameters, &args_value).map_err(|e| {
            let err = RpcError::new(ErrorCode::InvalidParams, e.message);
            match e.argument {
                Some(a) => err.with_data(json!({"argument": a})),
                None => err,
            }
        })?;
        let Value::Object(args) = args_value else { unreachable!() };
        let handler = self.registry.handler(name).expect("definition implies handler");
        let outcome = panic::catch_unwind(AssertUnwindSafe(|| handler(&args, caller)));
        Ok(outcome.unwrap_or_else(|payload| {
            let detail = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            ToolResult::error(format!("tool `{name}` failed: {detail}"))
        }))
    }
}

fn parse_envelope(message: &Value) -> Result<Parsed, (RpcId, RpcError)> {
    let invalid = |id: RpcId, m: &str| (id, RpcError::new(ErrorCode::InvalidRequest, m));
    let obj = match message {
        Value::Object(o) => o,
        Value::Array(_) => return Err(invalid(RpcId::Null, "batch requests are not supported")),
        _ => return Err(invalid(RpcId::Null, "request must be a JSON object")),
    };
    let id = match obj.get("id") {
        None => None,
        Some(raw) => match RpcId::from_json(raw) {
            Some(id) => Some(id),
            None => return Err(invalid(RpcId::Null, "id must be an integer, string or null")),
        },
    };
    let echo = id.clone().unwrap_or(RpcId::Null);
    if obj.get("jsonrpc").and_then(Value::as_str) != Some("2.0") {
        return Err(invalid(echo, "jsonrpc must be \"2.0\""));
    }
    let Some(method) = obj.get("method").and_then(Value::as_str) else {
        return Err(invalid(echo, "method must be a string"));
    };
    let method = method.to_owned();
    let params = obj.get("params").cloned();
    Ok(match id {
        Some(id) => Parsed::Request { id, method, params },
        None => Parsed::Notification { method, params },
    })
}

/// Newline-delimited JSON-RPC over a reader/writer pair. Blank lines are
/// skipped; the loop ends at end of input.
pub fn serve_stdio<R: BufRead, W: Write>(
    server: &McpServer,
    mut input: R,
    mut output: W,
    caller: &str,
) -> io::Result<()> {
    let mut line = Vec::new();
    loop {
        line.clear();
        if input.read_until(b'\n', &mut line)? == 0 {
            return Ok(());
        }
        if line.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        let frame = line.strip_suffix(b"\n").unwrap_or(&line);
        let frame = frame.strip_suffix(b"\r").unwrap_or(frame);
        if let Some(mut response) = server.handle_message(frame, caller) {
            response.push(b'\n');
            output.write_all(&response)?;
            output.flush()?;
        }
    }
}
