//! Terminal chat against a running server.

use std::io::{BufRead, Write};
use std::time::Duration;

use anyhow::{anyhow, bail, Context};
use serde_json::{json, Value};

pub struct ChatClient {
    http: reqwest::blocking::Client,
    base: String,
    token: String,
}

impl ChatClient {
    pub fn login(base_url: &str, username: &str, password: &str) -> anyhow::Result<Self> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()?;
        let base = base_url.trim_end_matches('/').to_owned();
        let resp = http
            .post(format!("{base}/api/login"))
            .json(&json!({"username": username, "password": password}))
            .send()
            .with_context(|| format!("cannot reach {base}"))?;
        let status = resp.status();
        let body: Value = resp.json().unwrap_or(Value::Null);
        if !status.is_success() {
            bail!("login failed: {}", error_text(&body, status));
        }
        let token = body["token"]
            .as_str()
            .ok_or_else(|| anyhow!("login response has no token"))?
            .to_owned();
        Ok(Self { http, base, token })
    }

    /// One chat turn. Loop-exceeded answers (409) still carry the executed
    /// calls, so they come back as a reply rather than an error.
    pub fn send(&self, message: &str) -> anyhow::Result<Value> {
        let resp = self
            .http
            .post(format!("{}/api/chat", self.base))
            .bearer_auth(&self.token)
            .json(&json!({"message": message}))
            .send()?;
        let status = resp.status();
        let body: Value = resp.json().unwrap_or(Value::Null);
        if status.is_success() || status == reqwest::StatusCode::CONFLICT {
            return Ok(body);
        }
        bail!("chat failed: {}", error_text(&body, status))
    }

    pub fn logout(&self) {
        let _ = self
            .http
            .post(format!("{}/api/logout", self.base))
            .bearer_auth(&self.token)
            .send();
    }
}

fn error_text(body: &Value, status: reqwest::StatusCode) -> String {
    body["error"].as_str().map(str::to_owned).unwrap_or_else(|| status.to_string())
}

/// Audit lines for the executed tool calls, then the reply.
pub fn render_turn(body: &Value) -> String {
    let mut out = String::new();
    for call in body["tool_calls"].as_array().into_iter().flatten() {
        out.push_str(&format!(
            "[tool] {}({}) -> {}\n",
            call["name"].as_str().unwrap_or("?"),
            call["args"],
            call["summary"].as_str().unwrap_or_default()
        ));
    }
    match (body["reply"].as_str(), body["error"].as_str()) {
        (Some(reply), _) => out.push_str(&format!("ami> {reply}\n")),
        (None, Some(err)) => out.push_str(&format!("error: {err}\n")),
        (None, None) => {}
    }
    out
}

/// Read messages until end of input. With `echo`, each message is written
/// back after a `you> ` prefix (for piped input); otherwise the prefix is
/// shown as a prompt.
pub fn run<R: BufRead, W: Write>(client: &ChatClient, input: R, mut out: W, echo: bool) -> anyhow::Result<()> {
    let mut lines = input.lines();
    loop {
        if !echo {
            write!(out, "you> ")?;
            out.flush()?;
        }
        let Some(line) = lines.next() else {
            if !echo {
                writeln!(out)?;
            }
            return Ok(());
        };
        let line = line?;
        let message = line.trim();
        if message.is_empty() {
            continue;
        }
        if echo {
            writeln!(out, "you> {message}")?;
        }
        let body = client.send(message)?;
        write!(out, "{}", render_turn(&body))?;
        out.flush()?;
    }
}
