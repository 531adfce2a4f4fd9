//! Conversion between the tool registry, an OpenAPI 3.1 document, and the
//! tool specifications handed to the planner.
//!
//! Identity parameters are removed from the exposed schemas (the backend
//! overwrites them anyway) and recorded under `x-identity-params`.

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::mcp::ToolDefinition;

pub const OPENAPI_VERSION: &str = "3.1.0";
pub const TOOL_PATH_PREFIX: &str = "/tools/";
pub const IDENTITY_EXTENSION: &str = "x-identity-params";

/// The `(name, description, parameters)` triple a planner sees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerToolSpec {
    pub name: String,
    pub description: String,
    pub parameters: Value,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OpenApiError {
    #[error("malformed OpenAPI document: {0}")]
    Document(String),
    #[error("malformed OpenAPI path `{path}`: {reason}")]
    Path { path: String, reason: String },
}

/// Copy of `schema` without the given properties (and their `required` entries).
pub fn strip_params(schema: &Value, hidden: &[String]) -> Value {
    let mut schema = schema.clone();
    if hidden.is_empty() {
        return schema;
    }
    if let Some(obj) = schema.as_object_mut() {
        if let Some(Value::Object(props)) = obj.get_mut("properties") {
            props.retain(|k, _| !hidden.contains(k));
        }
        if let Some(Value::Array(req)) = obj.get_mut("required") {
            req.retain(|r| r.as_str().is_none_or(|r| !hidden.iter().any(|h| h == r)));
        }
    }
    schema
}

/// Planner-facing projection of one definition.
pub fn project(def: &ToolDefinition) -> PlannerToolSpec {
    PlannerToolSpec {
        name: def.name.clone(),
        description: def.description.clone(),
        parameters: strip_params(&def.parameters, &def.identity_params),
    }
}

/// Direct projection of a registry, sorted by tool name.
pub fn project_all<'a>(tools: impl IntoIterator<Item = &'a ToolDefinition>) -> Vec<PlannerToolSpec> {
    let mut specs: Vec<PlannerToolSpec> = tools.into_iter().map(project).collect();
    specs.sort_by(|a, b| a.name.cmp(&b.name));
    specs
}

/// Build the OpenAPI document. Output is deterministic: paths are keyed by
/// tool name in sorted order.
pub fn registry_to_openapi<'a>(tools: impl IntoIterator<Item = &'a ToolDefinition>) -> Value {
    let mut defs: Vec<&ToolDefinition> = tools.into_iter().collect();
    defs.sort_by(|a, b| a.name.cmp(&b.name));
    let mut paths = Map::new();
    for def in defs {
        let schema = strip_params(&def.parameters, &def.identity_params);
        let operation = json!({
            "operationId": def.name,
            "summary": def.name,
            "description": def.description,
            "requestBody": {
                "required": true,
                "content": {"application/json": {"schema": schema}}
            },
            "responses": {
                "200": {
                    "description": "Tool result",
                    "content": {"application/json": {"schema": {
                        "type": "object",
                        "properties": {
                            "content": {},
                            "is_error": {"type": "boolean"}
                        },
                        "required": ["content", "is_error"]
                    }}}
                }
            },
            IDENTITY_EXTENSION: def.identity_params,
        });
        paths.insert(format!("{TOOL_PATH_PREFIX}{}", def.name), json!({ "post": operation }));
    }
    json!({
        "openapi": OPENAPI_VERSION,
        "info": {"title": "AMI tools", "version": env!("CARGO_PKG_VERSION")},
        "paths": Value::Object(paths),
    })
}

/// One spec per path, in document order.
pub fn openapi_to_planner_specs(doc: &Value) -> Result<Vec<PlannerToolSpec>, OpenApiError> {
    let paths = doc
        .get("paths")
        .and_then(Value::as_object)
        .ok_or_else(|| OpenApiError::Document("`paths` object is missing".into()))?;
    let mut specs = Vec::with_capacity(paths.len());
    for (path, item) in paths {
        let fail = |reason: &str| OpenApiError::Path {
            path: path.clone(),
            reason: reason.to_owned(),
        };
        let op = item.get("post").ok_or_else(|| fail("no POST operation"))?;
        let name = match op.get("operationId").and_then(Value::as_str) {
            Some(id) => id.to_owned(),
            None => path
                .strip_prefix(TOOL_PATH_PREFIX)
                .filter(|n| !n.is_empty())
                .ok_or_else(|| fail("no operationId and path is not /tools/{name}"))?
                .to_owned(),
        };
        let description = op
            .get("description")
            .and_then(Value::as_str)
            .unwrap_or_default()
            .to_owned();
        let body = op.get("requestBody").ok_or_else(|| fail("missing requestBody"))?;
        let parameters = body
            .get("content")
            .and_then(|c| c.get("application/json"))
            .and_then(|c| c.get("schema"))
            .ok_or_else(|| fail("requestBody has no application/json schema"))?;
        if !parameters.is_object() {
            return Err(fail("requestBody schema is not an object"));
        }
        specs.push(PlannerToolSpec {
            name,
            description,
            parameters: parameters.clone(),
        });
    }
    Ok(specs)
}
