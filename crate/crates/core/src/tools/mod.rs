//! The AMI tool suite: sensor data queries, issue reporting and profile
//! management, plus the identity enforcement applied to every call.

pub mod identity;
pub mod issues;
pub mod profiles;

use std::path::Path;
use std::sync::Arc;

use serde_json::{json, Map, Value};

use crate::clock::Clock;
use crate::ingest::parse_timestamp;
use crate::journal::{FileJournal, JournalError};
use crate::mcp::{RegistryError, ToolDefinition, ToolRegistry, ToolResult};
use crate::timeseries::{Field, StoreError, TimeRange, TimeSeries};

pub use identity::{enforce_call, enforce_identity, UnknownTool};
pub use issues::{IssueError, IssueStatus, IssueStore, IssueTicket};
pub use profiles::{ProfileError, ProfileStore, ProfileUpdate, UserProfile};

pub const GET_RECENT_SENSOR_DATA: &str = "get_recent_sensor_data";
pub const GET_SENSOR_STATS: &str = "get_sensor_stats";
pub const REPORT_ISSUE: &str = "report_issue";
pub const UPDATE_USER_PROFILE: &str = "update_user_profile";

pub const MAX_RECENT_LIMIT: i64 = 100;

pub const READINGS_FILE: &str = "readings.jsonl";
pub const ISSUES_FILE: &str = "issues.jsonl";
pub const PROFILES_FILE: &str = "profiles.jsonl";

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Journal(#[from] JournalError),
    #[error("cannot open data file: {0}")]
    Io(#[from] std::io::Error),
}

/// Everything the tools operate on.
#[derive(Clone)]
pub struct AmiBackend {
    pub readings: Arc<TimeSeries>,
    pub issues: Arc<IssueStore>,
    pub profiles: Arc<ProfileStore>,
    pub clock: Arc<dyn Clock>,
}

impl AmiBackend {
    pub fn in_memory(seed_profiles: impl IntoIterator<Item = UserProfile>, clock: Arc<dyn Clock>) -> Self {
        Self {
            readings: Arc::new(TimeSeries::in_memory()),
            issues: Arc::new(IssueStore::in_memory()),
            profiles: Arc::new(ProfileStore::in_memory(seed_profiles)),
            clock,
        }
    }

    /// Open (or create) the append logs under `data_dir` and replay them.
    pub fn open(
        data_dir: &Path,
        seed_profiles: impl IntoIterator<Item = UserProfile>,
        clock: Arc<dyn Clock>,
    ) -> Result<Self, BackendError> {
        Ok(Self {
            readings: Arc::new(TimeSeries::open_file(data_dir.join(READINGS_FILE))?),
            issues: Arc::new(IssueStore::open(Box::new(FileJournal::open(data_dir.join(ISSUES_FILE))?))?),
            profiles: Arc::new(ProfileStore::open(
                seed_profiles,
                Box::new(FileJournal::open(data_dir.join(PROFILES_FILE))?),
            )?),
            clock,
        })
    }

    pub fn list_issues(&self, caller: &str) -> Vec<IssueTicket> {
        self.issues.list_for(caller)
    }

    /// Registry with the four AMI tools.
    pub fn registry(&self) -> ToolRegistry {
        let mut reg = ToolRegistry::new();
        self.register_tools(&mut reg).expect("built-in tool definitions are valid");
        reg
    }

    pub fn register_tools(&self, reg: &mut ToolRegistry) -> Result<(), RegistryError> {
        let b = self.clone();
        reg.register_fn(recent_definition(), move |args, _| b.get_recent_sensor_data(args))?;
        let b = self.clone();
        reg.register_fn(stats_definition(), move |args, _| b.get_sensor_stats(args))?;
        let b = self.clone();
        reg.register_fn(report_definition(), move |args, caller| b.report_issue(args, caller))?;
        let b = self.clone();
        reg.register_fn(profile_definition(), move |args, caller| b.update_user_profile(args, caller))?;
        Ok(())
    }

    pub fn get_recent_sensor_data(&self, args: &Map<String, Value>) -> ToolResult {
        let limit = match args.get("limit") {
            None | Some(Value::Null) => 1,
            Some(v) => match as_integer(v) {
                Some(n) => n,
                None => return ToolResult::error(format!("limit must be an integer, got {v}")),
            },
        };
        if !(1..=MAX_RECENT_LIMIT).contains(&limit) {
            return ToolResult::error(format!("limit must be between 1 and {MAX_RECENT_LIMIT}, got {limit}"));
        }
        let readings = self.readings.query_recent(limit as usize);
        ToolResult::ok(json!({ "count": readings.len(), "readings": readings }))
    }

    pub fn get_sensor_stats(&self, args: &Map<String, Value>) -> ToolResult {
        let ts = |key: &str| match args.get(key) {
            Some(v) => parse_timestamp(v).map_err(|m| ToolResult::error(format!("{key}: {m}"))),
            None => Err(ToolResult::error(format!("{key}: missing"))),
        };
        let start = match ts("start") {
            Ok(t) => t,
            Err(e) => return e,
        };
        let end = match ts("end") {
            Ok(t) => t,
            Err(e) => return e,
        };
        let field = match args.get("field").and_then(Value::as_str).unwrap_or_default().parse::<Field>() {
            Ok(f) => f,
            Err(e) => return ToolResult::error(format!("field: {e}")),
        };
        let range = match TimeRange::new(start, end) {
            Ok(r) => r,
            Err(e) => return ToolResult::error(format!("start: {e}")),
        };
        let stats = self.readings.aggregate(&range, field);
        ToolResult::ok(serde_json::to_value(stats).expect("stats serialize"))
    }

    pub fn report_issue(&self, args: &Map<String, Value>, caller: &str) -> ToolResult {
        let reporter = args.get("user_id").and_then(Value::as_str).unwrap_or(caller);
        if !self.profiles.contains(reporter) {
            return ToolResult::error(format!("unknown user `{reporter}`"));
        }
        let description = args.get("description").and_then(Value::as_str).unwrap_or_default();
        match self.issues.create(reporter, description, self.clock.now()) {
            Ok(ticket) => ToolResult::ok(serde_json::to_value(ticket).expect("ticket serializes")),
            Err(e) => ToolResult::error(format!("description: {e}")),
        }
    }

    pub fn update_user_profile(&self, args: &Map<String, Value>, caller: &str) -> ToolResult {
        let user = args.get("user_id").and_then(Value::as_str).unwrap_or(caller);
        let update = ProfileUpdate {
            display_name: args.get("display_name").and_then(Value::as_str).map(str::to_owned),
            email: args.get("email").and_then(Value::as_str).map(str::to_owned),
            notification_threshold_pm2_5: args.get("notification_threshold_pm2_5").and_then(Value::as_f64),
        };
        match self.profiles.update(user, &update) {
            Ok(profile) => ToolResult::ok(serde_json::to_value(profile).expect("profile serializes")),
            Err(e) => ToolResult::error(e.to_string()),
        }
    }
}

fn as_integer(v: &Value) -> Option<i64> {
    v.as_i64().or_else(|| {
        v.as_f64()
            .filter(|f| f.is_finite() && f.fract() == 0.0 && f.abs() < 9.0e15)
            .map(|f| f as i64)
    })
}

pub fn recent_definition() -> ToolDefinition {
    ToolDefinition::new(
        GET_RECENT_SENSOR_DATA,
        "Fetch the most recent air quality readings (temperature, humidity, CO2, PM1.0, PM2.5, PM10), newest first.",
        json!({
            "type": "object",
            "properties": {
                "limit": {"type": "integer", "description": "Number of readings to return, 1 to 100. Defaults to 1."}
            }
        }),
    )
}

pub fn stats_definition() -> ToolDefinition {
    ToolDefinition::new(
        GET_SENSOR_STATS,
        "Minimum, maximum and mean of one measurement over a time range, for historical trend questions.",
        json!({
            "type": "object",
            "properties": {
                "start": {"type": "string", "description": "Range start, RFC 3339 timestamp (inclusive)."},
                "end": {"type": "string", "description": "Range end, RFC 3339 timestamp (inclusive)."},
                "field": {"type": "string", "description": "One of temperature, humidity, co2, pm1_0, pm2_5, pm10."}
            },
            "required": ["start", "end", "field"]
        }),
    )
}

pub fn report_definition() -> ToolDefinition {
    ToolDefinition::new(
        REPORT_ISSUE,
        "Create an issue ticket describing a problem the current user has noticed with the monitoring system.",
        json!({
            "type": "object",
            "properties": {
                "description": {"type": "string", "description": "What went wrong, in the user's words."},
                "user_id": {"type": "string", "description": "Reporting user."}
            },
            "required": ["description", "user_id"]
        }),
    )
    .with_identity_params(["user_id"])
}

pub fn profile_definition() -> ToolDefinition {
    ToolDefinition::new(
        UPDATE_USER_PROFILE,
        "Update the current user's profile. Only the fields given are changed.",
        json!({
            "type": "object",
            "properties": {
                "user_id": {"type": "string", "description": "User whose profile is updated."},
                "display_name": {"type": "string", "description": "New display name."},
                "email": {"type": "string", "description": "New email address."},
                "notification_threshold_pm2_5": {"type": "number", "description": "PM2.5 level (ug/m3) above which the user wants to be notified."}
            },
            "required": ["user_id"]
        }),
    )
    .with_identity_params(["user_id"])
}
