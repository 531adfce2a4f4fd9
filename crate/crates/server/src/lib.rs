//! The AMI server: REST API for sensors and the dashboard, chat, and the MCP
//! HTTP transport, all over one shared tool registry.

pub mod config;
pub mod http;
pub mod state;

use std::future::Future;
use std::sync::Arc;

pub use config::{Config, ConfigError, PlannerMode};
pub use http::{router, summarize};
pub use state::{AppState, StartupError};

/// Serve until `shutdown` resolves, then flush the logs.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: Arc<AppState>,
    static_dir: Option<&std::path::Path>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let app = router(state.clone(), static_dir);
    axum::serve(listener, app).with_graceful_shutdown(shutdown).await?;
    state.flush();
    Ok(())
}
