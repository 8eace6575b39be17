//! Model Context Protocol over newline-delimited JSON-RPC 2.0.
//!
//! [`McpServer`] answers `initialize`, `ping`, `tools/list` and `tools/call`
//! for one client over a byte stream ([`serve`]). Tool failures are reported
//! inside the result with `isError` set; JSON-RPC errors are reserved for
//! envelope and lifecycle problems. [`WireClient`] drives a server through
//! the same encoded lines, for replay and tests.

mod client;
mod content;
mod message;
mod server;

pub use client::WireClient;
pub use content::{Content, ToolResult, PNG_MIME};
pub use message::{
    decode_message, decode_response, decode_value, DecodeError, RequestId, RpcError, RpcRequest, RpcResponse,
    INTERNAL_ERROR, INVALID_PARAMS, INVALID_REQUEST, METHOD_NOT_FOUND, PARSE_ERROR, SERVER_NOT_INITIALIZED,
};
pub use server::{serve, McpServer, PROTOCOL_VERSION, SERVER_NAME};
