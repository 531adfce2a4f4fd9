//! Deterministic rule-driven planner.
//!
//! Rule file, one rule per line, first match wins:
//!
//! ```text
//! # comment
//! match /weather|air quality/i => call get_recent_sensor_data({"limit": 1}) => say "Temperature is {temperature} °C."
//! match stuck => call report_issue({"description": "{user_text}"}) => say "Opened issue #{id}."
//! match hello => say "Hi!"
//! match /email to (?P<email>\S+)/i => call update_user_profile({"email": "{email}"}) => say "Saved {email}." else "Not saved: {message}"
//! ```
//!
//! A pattern is either a case-insensitive literal substring or a `/regex/`
//! (with optional `i` flag), tested against the latest user message. Each
//! `call` step is one planner round; the final step must be a `say`.
//! `{name}` in a `say` template is replaced with the first `name` key found
//! in the most recent tool result; `{user_text}` is the latest user message.
//! Named groups of a regex pattern, `(?P<email>\S+@\S+)`, are available as
//! `{email}`. User text and captures may also appear inside string arguments
//! of a `call`; an argument that is exactly one placeholder whose value reads
//! as a number is passed as that number. The optional `else` template of a
//! `say` is used instead when the most recent tool result is an error.

use std::path::Path;
use std::sync::OnceLock;

use regex::{Regex, RegexBuilder};
use serde_json::{Map, Value};

use super::{ChatMessage, Planner, PlannerDecision, PlannerError, Role, ToolCall};
use crate::mcp::ToolResult;
use crate::openapi::PlannerToolSpec;

pub const FALLBACK_TEXT: &str = "I can help with air quality data, issue reports, and your profile.";
const MISSING_VALUE: &str = "unknown";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("rule file line {line}: {message}")]
pub struct RuleError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, thiserror::Error)]
pub enum RuleFileError {
    #[error("cannot read rule file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Rule(#[from] RuleError),
}

#[derive(Debug, Clone)]
enum Pattern {
    Literal(String),
    Regex(Regex),
}

impl Pattern {
    /// Named captures of a match, `None` when the text does not match.
    fn captures(&self, text: &str) -> Option<Vec<(String, String)>> {
        match self {
            Pattern::Literal(lit) => text.to_lowercase().contains(lit.as_str()).then(Vec::new),
            Pattern::Regex(re) => {
                let caps = re.captures(text)?;
                Some(
                    re.capture_names()
                        .flatten()
                        .filter_map(|name| caps.name(name).map(|m| (name.to_owned(), m.as_str().to_owned())))
                        .collect(),
                )
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Step {
    Call { tool: String, args: Map<String, Value> },
    Say { ok: String, on_error: Option<String> },
}

#[derive(Debug, Clone)]
struct Rule {
    pattern: Pattern,
    steps: Vec<Step>,
}

#[derive(Debug, Clone, Default)]
pub struct ScriptedPlanner {
    rules: Vec<Rule>,
}

impl ScriptedPlanner {
    pub fn parse(text: &str) -> Result<Self, RuleError> {
        let mut rules = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            rules.push(parse_rule(line).map_err(|message| RuleError { line: idx + 1, message })?);
        }
        Ok(Self { rules })
    }

    pub fn from_file(path: &Path) -> Result<Self, RuleFileError> {
        let text = std::fs::read_to_string(path).map_err(|source| RuleFileError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(Self::parse(&text)?)
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }
}

impl Planner for ScriptedPlanner {
    fn decide(&self, messages: &[ChatMessage], _tools: &[PlannerToolSpec]) -> Result<PlannerDecision, PlannerError> {
        let Some(user_idx) = messages.iter().rposition(|m| m.role == Role::User) else {
            return Ok(PlannerDecision::FinalText(FALLBACK_TEXT.into()));
        };
        let user_text = &messages[user_idx].text;
        let Some((rule, mut vars)) = self
            .rules
            .iter()
            .find_map(|r| r.pattern.captures(user_text).map(|caps| (r, caps)))
        else {
            return Ok(PlannerDecision::FinalText(FALLBACK_TEXT.into()));
        };
        vars.push(("user_text".to_owned(), user_text.clone()));
        let since_user = &messages[user_idx + 1..];
        let step_idx = since_user.iter().filter(|m| m.tool_calls.is_some()).count();
        let step = rule.steps.get(step_idx).unwrap_or_else(|| rule.steps.last().expect("rules have steps"));
        match step {
            Step::Say { ok, on_error } => {
                let latest = since_user
                    .iter()
                    .rev()
                    .find(|m| m.role == Role::Tool)
                    .and_then(|m| serde_json::from_str::<ToolResult>(&m.text).ok());
                let template = match (on_error, &latest) {
                    (Some(t), Some(r)) if r.is_error => t,
                    _ => ok,
                };
                Ok(PlannerDecision::FinalText(render(template, latest.as_ref(), &vars)))
            }
            Step::Call { tool, args } => {
                let prior_calls: usize = messages.iter().map(|m| m.calls().len()).sum();
                let args = args
                    .iter()
                    .map(|(k, v)| (k.clone(), substitute(v, &vars)))
                    .collect();
                Ok(PlannerDecision::ToolCalls(vec![ToolCall {
                    id: format!("call_{}", prior_calls + 1),
                    tool_name: tool.clone(),
                    args,
                }]))
            }
        }
    }
}

fn placeholder() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{([a-z_][a-z0-9_]*)\}").expect("static regex"))
}

fn lookup<'a>(vars: &'a [(String, String)], key: &str) -> Option<&'a str> {
    vars.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
}

fn render(template: &str, latest: Option<&ToolResult>, vars: &[(String, String)]) -> String {
    placeholder()
        .replace_all(template, |caps: &regex::Captures<'_>| {
            let key = &caps[1];
            if let Some(v) = lookup(vars, key) {
                return v.to_owned();
            }
            latest
                .and_then(|r| find_key(&r.content, key))
                .map(|v| match v {
                    Value::String(s) => s.clone(),
                    other => other.to_string(),
                })
                .unwrap_or_else(|| MISSING_VALUE.to_owned())
        })
        .into_owned()
}

/// Depth-first search for the first occurrence of `key`.
fn find_key<'a>(v: &'a Value, key: &str) -> Option<&'a Value> {
    match v {
        Value::Object(map) => map
            .get(key)
            .or_else(|| map.values().find_map(|child| find_key(child, key))),
        Value::Array(items) => items.iter().find_map(|child| find_key(child, key)),
        _ => None,
    }
}

fn substitute(v: &Value, vars: &[(String, String)]) -> Value {
    match v {
        Value::String(s) => {
            if let Some(whole) = placeholder().captures(s).filter(|c| c[0].len() == s.len()) {
                if let Some(n) = lookup(vars, &whole[1]).and_then(|t| t.trim().parse::<serde_json::Number>().ok()) {
                    return Value::Number(n);
                }
            }
            Value::String(
                placeholder()
                    .replace_all(s, |c: &regex::Captures<'_>| {
                        lookup(vars, &c[1]).map_or_else(|| c[0].to_owned(), str::to_owned)
                    })
                    .into_owned(),
            )
        }
        Value::Array(items) => Value::Array(items.iter().map(|i| substitute(i, vars)).collect()),
        Value::Object(map) => Value::Object(map.iter().map(|(k, v)| (k.clone(), substitute(v, vars))).collect()),
        other => other.clone(),
    }
}

fn parse_rule(line: &str) -> Result<Rule, String> {
    let rest = line
        .strip_prefix("match ")
        .ok_or_else(|| "rule must start with `match `".to_owned())?
        .trim_start();
    let (pattern, mut rest) = parse_pattern(rest)?;
    let mut steps = Vec::new();
    loop {
        rest = rest.trim_start();
        if rest.is_empty() {
            break;
        }
        rest = rest
            .strip_prefix("=>")
            .ok_or_else(|| format!("expected `=>` before `{}`", preview(rest)))?
            .trim_start();
        if let Some(after) = rest.strip_prefix("say ") {
            let (template, tail) = parse_json_prefix(after.trim_start())?;
            let Value::String(ok) = template else {
                return Err("`say` expects a double-quoted string".into());
            };
            let mut on_error = None;
            if let Some(after) = tail.trim_start().strip_prefix("else ") {
                let (t, tail) = parse_json_prefix(after.trim_start())?;
                let Value::String(t) = t else {
                    return Err("`else` expects a double-quoted string".into());
                };
                on_error = Some(t);
                rest = tail;
            } else {
                rest = tail;
            }
            steps.push(Step::Say { ok, on_error });
        } else if let Some(after) = rest.strip_prefix("call ") {
            let after = after.trim_start();
            let name_end = after
                .find(|c: char| !(c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_'))
                .unwrap_or(after.len());
            let tool = &after[..name_end];
            if tool.is_empty() || !tool.starts_with(|c: char| c.is_ascii_lowercase()) {
                return Err("`call` expects a tool name".into());
            }
            let after = after[name_end..]
                .trim_start()
                .strip_prefix('(')
                .ok_or_else(|| format!("expected `(` after tool name `{tool}`"))?
                .trim_start();
            let (args, tail) = if let Some(tail) = after.strip_prefix(')') {
                (Map::new(), tail)
            } else {
                let (args, tail) = parse_json_prefix(after)?;
                let Value::Object(args) = args else {
                    return Err(format!("arguments of `{tool}` must be a JSON object"));
                };
                let tail = tail
                    .trim_start()
                    .strip_prefix(')')
                    .ok_or_else(|| format!("expected `)` after arguments of `{tool}`"))?;
                (args, tail)
            };
            steps.push(Step::Call {
                tool: tool.to_owned(),
                args,
            });
            rest = tail;
        } else {
            return Err(format!("expected `call` or `say`, found `{}`", preview(rest)));
        }
    }
    match steps.last() {
        None => Err("rule has no actions".into()),
        Some(Step::Call { .. }) => Err("the last action of a rule must be `say`".into()),
        Some(Step::Say { .. }) => Ok(Rule { pattern, steps }),
    }
}

fn parse_pattern(s: &str) -> Result<(Pattern, &str), String> {
    if let Some(body) = s.strip_prefix('/') {
        let mut escaped = false;
        let close = body
            .char_indices()
            .find(|&(_, c)| {
                let hit = c == '/' && !escaped;
                escaped = c == '\\' && !escaped;
                hit
            })
            .map(|(i, _)| i)
            .ok_or_else(|| "unterminated /regex/".to_owned())?;
        let source = body[..close].replace("\\/", "/");
        let mut tail = &body[close + 1..];
        let case_insensitive = tail.starts_with('i');
        if case_insensitive {
            tail = &tail[1..];
        }
        let re = RegexBuilder::new(&source)
            .case_insensitive(case_insensitive)
            .build()
            .map_err(|e| format!("bad regex: {e}"))?;
        Ok((Pattern::Regex(re), tail))
    } else {
        let end = s.find("=>").ok_or_else(|| "rule has no actions".to_owned())?;
        let literal = s[..end].trim();
        if literal.is_empty() {
            return Err("empty pattern".into());
        }
        Ok((Pattern::Literal(literal.to_lowercase()), &s[end..]))
    }
}

fn parse_json_prefix(s: &str) -> Result<(Value, &str), String> {
    let mut stream = serde_json::Deserializer::from_str(s).into_iter::<Value>();
    match stream.next() {
        Some(Ok(v)) => Ok((v, &s[stream.byte_offset()..])),
        Some(Err(e)) => Err(format!("bad JSON: {e}")),
        None => Err("expected a JSON value".into()),
    }
}

fn preview(s: &str) -> String {
    s.chars().take(20).collect()
}
