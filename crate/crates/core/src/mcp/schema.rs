//! The JSON-Schema subset used by tool parameter declarations.
//!
//! Supported: a top-level `{"type": "object"}` with `properties` and
//! `required`; per-property `type` (string, number, integer, boolean),
//! `enum`, `minimum` and `maximum`. Other keywords are carried along but not
//! enforced.

use serde_json::{Map, Value};

pub const PRIMITIVE_TYPES: [&str; 4] = ["string", "number", "integer", "boolean"];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0}")]
pub struct SchemaError(pub String);

/// A failed argument check, naming the argument when there is one.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{message}")]
pub struct ArgumentError {
    pub argument: Option<String>,
    pub message: String,
}

impl ArgumentError {
    fn on(arg: &str, message: String) -> Self {
        Self {
            argument: Some(arg.to_owned()),
            message,
        }
    }
}

/// Check that `schema` is a parameter object within the supported subset.
pub fn check_schema(schema: &Value) -> Result<(), SchemaError> {
    let err = |m: String| Err(SchemaError(m));
    let Some(obj) = schema.as_object() else {
        return err("parameters must be a JSON object".into());
    };
    if obj.get("type").and_then(Value::as_str) != Some("object") {
        return err("parameters.type must be \"object\"".into());
    }
    let props = match obj.get("properties") {
        None => &Map::new(),
        Some(Value::Object(p)) => p,
        Some(_) => return err("parameters.properties must be an object".into()),
    };
    for (name, prop) in props {
        let Some(prop) = prop.as_object() else {
            return err(format!("property `{name}` must be an object"));
        };
        let ty = match prop.get("type").and_then(Value::as_str) {
            Some(t) if PRIMITIVE_TYPES.contains(&t) => t,
            Some(t) => return err(format!("property `{name}` has unsupported type `{t}`")),
            None => return err(format!("property `{name}` is missing a string `type`")),
        };
        if let Some(e) = prop.get("enum") {
            let Some(values) = e.as_array().filter(|a| !a.is_empty()) else {
                return err(format!("property `{name}`: enum must be a non-empty array"));
            };
            if let Some(bad) = values.iter().find(|v| !type_matches(ty, v)) {
                return err(format!("property `{name}`: enum value {bad} is not of type {ty}"));
            }
        }
        for kw in ["minimum", "maximum"] {
            if let Some(v) = prop.get(kw) {
                if !matches!(ty, "number" | "integer") {
                    return err(format!("property `{name}`: {kw} only applies to numeric types"));
                }
                if !v.is_number() {
                    return err(format!("property `{name}`: {kw} must be a number"));
                }
            }
        }
    }
    match obj.get("required") {
        None => {}
        Some(Value::Array(req)) => {
            let mut seen = std::collections::HashSet::new();
            for r in req {
                let Some(r) = r.as_str() else {
                    return err("required entries must be strings".into());
                };
                if !props.contains_key(r) {
                    return err(format!("required argument `{r}` is not a declared property"));
                }
                if !seen.insert(r) {
                    return err(format!("required argument `{r}` listed twice"));
                }
            }
        }
        Some(_) => return err("parameters.required must be an array".into()),
    }
    Ok(())
}

pub fn property_names(schema: &Value) -> Vec<String> {
    schema
        .get("properties")
        .and_then(Value::as_object)
        .map(|p| p.keys().cloned().collect())
        .unwrap_or_default()
}

fn type_matches(ty: &str, v: &Value) -> bool {
    match ty {
        "string" => v.is_string(),
        "boolean" => v.is_boolean(),
        "number" => v.is_number(),
        "integer" => is_integer(v),
        _ => false,
    }
}

fn is_integer(v: &Value) -> bool {
    match v {
        Value::Number(n) => {
            n.is_i64() || n.is_u64() || n.as_f64().is_some_and(|f| f.is_finite() && f.fract() == 0.0)
        }
        _ => false,
    }
}

/// Validate call arguments against a schema that passed [`check_schema`].
pub fn validate_args(schema: &Value, args: &Value) -> Result<(), ArgumentError> {
    let Some(args) = args.as_object() else {
        return Err(ArgumentError {
            argument: None,
            message: "arguments must be a JSON object".into(),
        });
    };
    let empty = Map::new();
    let props = schema
        .get("properties")
        .and_then(Value::as_object)
        .unwrap_or(&empty);
    if let Some(req) = schema.get("required").and_then(Value::as_array) {
        for r in req.iter().filter_map(Value::as_str) {
            if !args.contains_key(r) {
                return Err(ArgumentError::on(r, format!("missing required argument `{r}`")));
            }
        }
    }
    for (name, prop) in props {
        let Some(v) = args.get(name) else { continue };
        let ty = prop.get("type").and_then(Value::as_str).unwrap_or("string");
        if !type_matches(ty, v) {
            return Err(ArgumentError::on(
                name,
                format!("argument `{name}` must be of type {ty}, got {v}"),
            ));
        }
        if let Some(allowed) = prop.get("enum").and_then(Value::as_array) {
            if !allowed.iter().any(|a| json_eq(a, v)) {
                return Err(ArgumentError::on(
                    name,
                    format!("argument `{name}` must be one of {}", Value::Array(allowed.clone())),
                ));
            }
        }
        if let Some(x) = v.as_f64() {
            if let Some(min) = prop.get("minimum").and_then(Value::as_f64) {
                if x < min {
                    return Err(ArgumentError::on(name, format!("argument `{name}` must be >= {min}")));
                }
            }
            if let Some(max) = prop.get("maximum").and_then(Value::as_f64) {
                if x > max {
                    return Err(ArgumentError::on(name, format!("argument `{name}` must be <= {max}")));
                }
            }
        }
    }
    Ok(())
}

// numbers compare by value so 1 and 1.0 match the same enum entry
fn json_eq(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => x.as_f64() == y.as_f64(),
        _ => a == b,
    }
}
