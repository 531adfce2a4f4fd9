use std::path::Path;
use std::sync::Arc;

use ami_core::agent::scripted::RuleFileError;
use ami_core::agent::{Agent, ConversationStore, Planner, RemotePlanner, ScriptedPlanner};
use ami_core::auth::Authenticator;
use ami_core::journal::{FileJournal, JournalError};
use ami_core::mcp::McpServer;
use ami_core::tools::{AmiBackend, BackendError};
use ami_core::Clock;

use crate::config::{Config, ConfigError, PlannerMode};

pub const CONVERSATIONS_FILE: &str = "conversations.jsonl";

#[derive(Debug, thiserror::Error)]
pub enum StartupError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Rules(#[from] RuleFileError),
    #[error("cannot open data directory: {0}")]
    Backend(#[from] BackendError),
    #[error("cannot open conversation log: {0}")]
    Conversations(#[from] JournalError),
    #[error("cannot open conversation log: {0}")]
    Io(#[from] std::io::Error),
}

/// Everything a request handler needs.
pub struct AppState {
    pub backend: AmiBackend,
    pub auth: Arc<Authenticator>,
    pub mcp: McpServer,
    pub agent: Agent,
    pub conversations: ConversationStore,
    pub planner: Arc<dyn Planner>,
    pub max_rounds: usize,
    pub device_key: Option<String>,
}

impl AppState {
    pub fn new(
        backend: AmiBackend,
        auth: Authenticator,
        conversations: ConversationStore,
        planner: Arc<dyn Planner>,
        max_rounds: usize,
        device_key: Option<String>,
    ) -> Self {
        let auth = Arc::new(auth);
        let mcp = McpServer::new(backend.registry());
        let known = auth.clone();
        let agent = Agent::new(mcp.clone(), move |u| known.is_known_user(u));
        Self {
            backend,
            auth,
            mcp,
            agent,
            conversations,
            planner,
            max_rounds,
            device_key,
        }
    }

    /// Open the data directory and build the planner named by `config`.
    pub fn from_config(config: &Config, clock: Arc<dyn Clock>) -> Result<Self, StartupError> {
        config.validate()?;
        let planner = build_planner(config)?;
        std::fs::create_dir_all(&config.data_dir)?;
        let backend = AmiBackend::open(
            &config.data_dir,
            config.seed_users.iter().map(|u| u.profile()),
            clock.clone(),
        )?;
        let conversations = open_conversations(&config.data_dir)?;
        let auth = Authenticator::new(config.seed_users.iter().map(|u| u.record()), clock)
            .with_ttl(chrono::Duration::hours(config.session_ttl_hours));
        Ok(Self::new(
            backend,
            auth,
            conversations,
            planner,
            config.max_rounds,
            config.device_key.clone(),
        ))
    }

    pub fn flush(&self) {
        if let Err(e) = self.backend.readings.flush() {
            tracing::warn!("flushing readings failed: {e}");
        }
    }
}

fn open_conversations(dir: &Path) -> Result<ConversationStore, StartupError> {
    Ok(ConversationStore::open(Box::new(FileJournal::open(dir.join(CONVERSATIONS_FILE))?))?)
}

fn build_planner(config: &Config) -> Result<Arc<dyn Planner>, StartupError> {
    Ok(match config.planner_mode {
        PlannerMode::Scripted => {
            let path = config.scripted_rules_path.as_deref().expect("validated");
            Arc::new(ScriptedPlanner::from_file(path)?)
        }
        PlannerMode::Remote => {
            let remote = &config.remote;
            let key = remote.api_key_env.as_deref().and_then(|name| {
                let value = std::env::var(name).ok();
                if value.is_none() {
                    tracing::warn!("environment variable {name} is not set; calling the planner without a key");
                }
                value
            });
            Arc::new(RemotePlanner::new(
                remote.endpoint.clone().expect("validated"),
                key,
                remote.model.clone().expect("validated"),
            ))
        }
    })
}
