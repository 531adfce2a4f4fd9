//! A minimal Model Context Protocol server: JSON-RPC 2.0 message handling,
//! a tool registry with discovery, and newline-delimited stdio framing.
//!
//! Only the tools primitive is implemented. The HTTP transport lives in the
//! server crate and calls [`McpServer::handle_message`] just like
//! [`serve_stdio`] does, so both transports produce identical payloads.

pub mod jsonrpc;
pub mod registry;
pub mod schema;
mod server;

pub use jsonrpc::{ErrorCode, RpcError, RpcId, RpcResponse};
pub use registry::{RegistryError, ToolDefinition, ToolHandler, ToolRegistry, ToolResult};
pub use server::{serve_stdio, McpServer, PROTOCOL_VERSION, SERVER_NAME};
