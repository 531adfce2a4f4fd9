use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, OnceLock};

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::schema::{self, SchemaError};

/// A tool as advertised by `tools/list`.
///
/// `identity_params` names the arguments that carry the acting user; the
/// server overwrites them with the authenticated caller before dispatch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolDefinition {
    pub name: String,
    pub description: String,
    #[serde(rename = "inputSchema")]
    pub parameters: Value,
    #[serde(rename = "identityParams", default)]
    pub identity_params: Vec<String>,
}

impl ToolDefinition {
    pub fn new(name: impl Into<String>, description: impl Into<String>, parameters: Value) -> Self {
        Self {
            name: name.into(),
            description: description.into(),
            parameters,
            identity_params: Vec::new(),
        }
    }

    pub fn with_identity_params<I, S>(mut self, params: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.identity_params = params.into_iter().map(Into::into).collect();
        self
    }
}

/// Outcome of a tool handler. Errors are ordinary results with `is_error`
/// set and a `{"message": ...}` object as content.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolResult {
    pub content: Value,
    pub is_error: bool,
}

impl ToolResult {
    pub fn ok(content: Value) -> Self {
        Self {
            content,
            is_error: false,
        }
    }

    pub fn error(message: impl Into<String>) -> Self {
        Self {
            content: json!({ "message": message.into() }),
            is_error: true,
        }
    }

    pub fn error_message(&self) -> Option<&str> {
        self.is_error
            .then(|| self.content.get("message").and_then(Value::as_str))
            .flatten()
    }

    /// MCP `tools/call` result shape.
    pub fn to_call_result(&self) -> Value {
        let text = serde_json::to_string(&self.content).expect("JSON value serializes");
        json!({
            "content": [{"type": "text", "text": text}],
            "structuredContent": self.content,
            "isError": self.is_error,
        })
    }

    pub fn from_call_result(v: &Value) -> Option<Self> {
        let is_error = v.get("isError")?.as_bool()?;
        let content = match v.get("structuredContent") {
            Some(c) => c.clone(),
            None => {
                let text = v.get("content")?.get(0)?.get("text")?.as_str()?;
                serde_json::from_str(text).ok()?
            }
        };
        Some(Self { content, is_error })
    }
}

/// Handler invoked with validated arguments and the authenticated caller.
pub type ToolHandler = Arc<dyn Fn(&Map<String, Value>, &str) -> ToolResult + Send + Sync>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RegistryError {
    #[error("tool `{0}` is already registered")]
    DuplicateName(String),
    #[error("invalid tool name `{0}` (expected [a-z][a-z0-9_]*)")]
    InvalidName(String),
    #[error("malformed schema for tool `{tool}`: {source}")]
    MalformedSchema {
        tool: String,
        #[source]
        source: SchemaError,
    },
    #[error("identity parameter `{param}` of tool `{tool}` is not a declared property")]
    UnknownIdentityParam { tool: String, param: String },
}

fn name_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^[a-z][a-z0-9_]*$").expect("static regex"))
}

#[derive(Clone)]
struct Entry {
    definition: ToolDefinition,
    handler: ToolHandler,
}

/// Tools in registration order.
#[derive(Clone, Default)]
pub struct ToolRegistry {
    entries: Vec<Entry>,
    index: HashMap<String, usize>,
}

impl fmt::Debug for ToolRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list()
            .entries(self.entries.iter().map(|e| &e.definition.name))
            .finish()
    }
}

impl ToolRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, definition: ToolDefinition, handler: ToolHandler) -> Result<(), RegistryError> {
        if !name_pattern().is_match(&definition.name) {
            return Err(RegistryError::InvalidName(definition.name));
        }
        if self.index.contains_key(&definition.name) {
            return Err(RegistryError::DuplicateName(definition.name));
        }
        schema::check_schema(&definition.parameters).map_err(|source| RegistryError::MalformedSchema {
            tool: definition.name.clone(),
            source,
        })?;
        let props = schema::property_names(&definition.parameters);
        if let Some(p) = definition.identity_params.iter().find(|p| !props.contains(p)) {
            return Err(RegistryError::UnknownIdentityParam {
                tool: definition.name.clone(),
                param: p.clone(),
            });
        }
        self.index.insert(definition.name.clone(), self.entries.len());
        self.entries.push(Entry { definition, handler });
        Ok(())
    }

    /// Register a handler written as a plain closure.
    pub fn register_fn<F>(&mut self, definition: ToolDefinition, handler: F) -> Result<(), RegistryError>
    where
        F: Fn(&Map<String, Value>, &str) -> ToolResult + Send + Sync + 'static,
    {
        self.register(definition, Arc::new(handler))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn definitions(&self) -> impl Iterator<Item = &ToolDefinition> {
        self.entries.iter().map(|e| &e.definition)
    }

    pub fn definition(&self, name: &str) -> Option<&ToolDefinition> {
        self.index.get(name).map(|&i| &self.entries[i].definition)
    }

    pub(crate) fn handler(&self, name: &str) -> Option<&ToolHandler> {
        self.index.get(name).map(|&i| &self.entries[i].handler)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn def(name: &str) -> ToolDefinition {
        ToolDefinition::new(
            name,
            "test tool",
            json!({"type": "object", "properties": {"user_id": {"type": "string"}}}),
        )
    }

    fn noop(_: &Map<String, Value>, _: &str) -> ToolResult {
        ToolResult::ok(Value::Null)
    }

    #[test]
    fn register_and_lookup() {
        let mut reg = ToolRegistry::new();
        reg.register_fn(def("alpha"), noop).unwrap();
        assert_eq!(reg.len(), 1);
        assert_eq!(reg.definition("alpha"), Some(&def("alpha")));
        assert!(reg.handler("alpha").is_some());
    }

    #[test]
    fn duplicate_leaves_registry_unchanged() {
        let mut reg = ToolRegistry::new();
        reg.register_fn(def("alpha"), noop).unwrap();
        let mut other = def("alpha");
        other.description = "changed".into();
        assert_eq!(
            reg.register_fn(other, noop),
            Err(RegistryError::DuplicateName("alpha".into()))
        );
        assert_eq!(reg.len(), 1);
        assert_eq!(reg.definition("alpha").unwrap().description, "test tool");
    }

    #[test]
    fn rejects_bad_names_schemas_and_identity_params() {
        let mut reg = ToolRegistry::new();
        assert!(matches!(reg.register_fn(def("Alpha"), noop), Err(RegistryError::InvalidName(_))));
        assert!(matches!(reg.register_fn(def("1x"), noop), Err(RegistryError::InvalidName(_))));
        let bad = ToolDefinition::new("bad", "", json!({"type": "string"}));
        assert!(matches!(reg.register_fn(bad, noop), Err(RegistryError::MalformedSchema { .. })));
        let ghost = def("ghost").with_identity_params(["owner"]);
        assert!(matches!(
            reg.register_fn(ghost, noop),
            Err(RegistryError::UnknownIdentityParam { .. })
        ));
        assert!(reg.is_empty());
    }

    #[test]
    fn call_result_roundtrip() {
        let r = ToolResult::ok(json!({"count": 2}));
        assert_eq!(ToolResult::from_call_result(&r.to_call_result()), Some(r));
        let e = ToolResult::error("boom");
        assert_eq!(e.error_message(), Some("boom"));
        assert_eq!(ToolResult::from_call_result(&e.to_call_result()), Some(e));
    }
}
