//! Random tool registries within the supported schema subset.

use ami_core::mcp::{ToolDefinition, ToolRegistry, ToolResult};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

const NAME_HEAD: &[u8] = b"abcdefghijklmnopqrstuvwxyz";
const NAME_TAIL: &[u8] = b"abcdefghijklmnopqrstuvwxyz0123456789_";
const DESCRIPTION_WORDS: &[&str] = &[
    "fetch", "the", "latest", "PM2.5", "reading", "über", "\"quoted\"", "line\nbreak", "50%", "{braces}", "温度",
    "tab\there", "",
];

fn ident(rng: &mut ChaCha8Rng, max_len: usize) -> String {
    let len = rng.random_range(1..=max_len);
    let mut s = String::with_capacity(len);
    s.push(*NAME_HEAD.choose(rng).unwrap() as char);
    for _ in 1..len {
        s.push(*NAME_TAIL.choose(rng).unwrap() as char);
    }
    s
}

fn description(rng: &mut ChaCha8Rng) -> String {
    let words = rng.random_range(0..8);
    (0..words)
        .map(|_| *DESCRIPTION_WORDS.choose(rng).unwrap())
        .collect::<Vec<_>>()
        .join(" ")
}

fn property(rng: &mut ChaCha8Rng) -> Value {
    let ty = *["string", "number", "integer", "boolean"].choose(rng).unwrap();
    let mut p = Map::new();
    p.insert("type".into(), json!(ty));
    if rng.random_bool(0.5) {
        p.insert("description".into(), json!(description(rng)));
    }
    match ty {
        "string" if rng.random_bool(0.3) => {
            let values: Vec<String> = (0..rng.random_range(1..4)).map(|_| ident(rng, 6)).collect();
            p.insert("enum".into(), json!(values));
        }
        "integer" => {
            if rng.random_bool(0.4) {
                p.insert("minimum".into(), json!(rng.random_range(-10..10)));
            }
            if rng.random_bool(0.4) {
                p.insert("maximum".into(), json!(rng.random_range(10..1000)));
            }
        }
        "number" if rng.random_bool(0.4) => {
            p.insert("maximum".into(), json!(rng.random_range(0.0..1.0e6)));
        }
        _ => {}
    }
    p.into()
}

/// One definition; string properties are candidates for identity slots.
pub fn random_definition(rng: &mut ChaCha8Rng, name: String) -> ToolDefinition {
    let mut props = Map::new();
    for _ in 0..rng.random_range(0..6) {
        props.insert(ident(rng, 10), property(rng));
    }
    if rng.random_bool(0.5) {
        props.insert("user_id".into(), json!({"type": "string"}));
    }
    let mut names: Vec<String> = props.keys().cloned().collect();
    names.shuffle(rng);
    let required: Vec<String> = names.iter().filter(|_| rng.random_bool(0.5)).cloned().collect();
    let identity: Vec<String> = names
        .iter()
        .filter(|n| props[n.as_str()]["type"] == "string" && (n.as_str() == "user_id" || rng.random_bool(0.2)))
        .cloned()
        .collect();

    let mut schema = Map::new();
    schema.insert("type".into(), json!("object"));
    if !props.is_empty() || rng.random_bool(0.5) {
        schema.insert("properties".into(), Value::Object(props));
    }
    if !required.is_empty() || rng.random_bool(0.2) {
        schema.insert("required".into(), json!(required));
    }
    ToolDefinition::new(name, description(rng), Value::Object(schema)).with_identity_params(identity)
}

/// 0..=max_tools definitions with distinct names.
pub fn random_definitions(rng: &mut ChaCha8Rng, max_tools: usize) -> Vec<ToolDefinition> {
    let count = rng.random_range(0..=max_tools);
    let mut names = std::collections::BTreeSet::new();
    while names.len() < count {
        names.insert(ident(rng, 12));
    }
    let mut names: Vec<String> = names.into_iter().collect();
    names.shuffle(rng);
    names.into_iter().map(|n| random_definition(rng, n)).collect()
}

/// Registry whose handlers echo their arguments and caller.
pub fn echo_registry(defs: &[ToolDefinition]) -> ToolRegistry {
    let mut reg = ToolRegistry::new();
    for d in defs {
        reg.register_fn(d.clone(), |args, caller| {
            ToolResult::ok(json!({"args": Value::Object(args.clone()), "caller": caller}))
        })
        .expect("generated definitions are valid");
    }
    reg
}

/// Expected planner view of a definition: identity properties removed from
/// `properties` and `required`, everything else untouched.
pub fn expected_parameters(def: &ToolDefinition) -> Value {
    let mut out = Map::new();
    for (k, v) in def.parameters.as_object().expect("object schema") {
        let v = match k.as_str() {
            "properties" => Value::Object(
                v.as_object()
                    .unwrap()
                    .iter()
                    .filter(|(name, _)| !def.identity_params.contains(name))
                    .map(|(a, b)| (a.clone(), b.clone()))
                    .collect(),
            ),
            "required" => Value::Array(
                v.as_array()
                    .unwrap()
                    .iter()
                    .filter(|r| !def.identity_params.iter().any(|p| Some(p.as_str()) == r.as_str()))
                    .cloned()
                    .collect(),
            ),
            _ => v.clone(),
        };
        out.insert(k.clone(), v);
    }
    Value::Object(out)
}

/// Values likely to confuse an identity check: other users, look-alikes,
/// wrong types and injection-shaped strings.
pub fn adversarial_value(rng: &mut ChaCha8Rng) -> Value {
    match rng.random_range(0..9) {
        0 => json!("bob"),
        1 => json!("admin"),
        2 => json!("alice "),
        3 => json!("ALICE"),
        4 => json!(""),
        5 => json!(rng.random_range(-5..100_000)),
        6 => json!(null),
        7 => json!(["alice", "bob"]),
        _ => json!(format!("{}\"; DROP TABLE users; --", ident(rng, 5))),
    }
}
