//! Code-level identity enforcement for tool calls.
//!
//! Whatever the planner put in an identity slot, the executed call carries
//! the authenticated session user. Every dispatch path in the crate goes
//! through [`enforce_identity`] before argument validation.

use serde_json::{Map, Value};

use crate::mcp::{ToolDefinition, ToolRegistry};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown tool `{0}`")]
pub struct UnknownTool(pub String);

/// Overwrite every identity parameter of `definition` with `session_user`.
/// All other arguments are left untouched.
pub fn enforce_identity(
    definition: &ToolDefinition,
    mut args: Map<String, Value>,
    session_user: &str,
) -> Map<String, Value> {
    for param in &definition.identity_params {
        args.insert(param.clone(), Value::String(session_user.to_owned()));
    }
    args
}

/// [`enforce_identity`] for a call addressed by tool name.
pub fn enforce_call(
    registry: &ToolRegistry,
    tool: &str,
    args: Map<String, Value>,
    session_user: &str,
) -> Result<Map<String, Value>, UnknownTool> {
    let definition = registry
        .definition(tool)
        .ok_or_else(|| UnknownTool(tool.to_owned()))?;
    Ok(enforce_identity(definition, args, session_user))
}
