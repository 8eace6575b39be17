use serde_json::{json, Value};

use crate::tools::{ToolSurface, WireTool};

use super::message::{decode_response, RequestId, RpcError, RpcRequest, INTERNAL_ERROR};
use super::server::{McpServer, PROTOCOL_VERSION};
use super::ToolResult;

/// An in-process client that talks to an [`McpServer`] only through encoded
/// request and response lines.
#[derive(Debug)]
pub struct WireClient {
    server: McpServer,
    next_id: i64,
}

impl WireClient {
    pub fn new(server: McpServer) -> Self {
        WireClient { server, next_id: 1 }
    }

    /// Performs the `initialize` handshake and the `initialized` notification.
    pub fn connect(server: McpServer) -> Result<Self, RpcError> {
        let mut client = WireClient::new(server);
        client.request(
            "initialize",
            json!({
                "protocolVersion": PROTOCOL_VERSION,
                "capabilities": {},
                "clientInfo": {"name": "vizbridge-wire-client", "version": env!("CARGO_PKG_VERSION")},
            }),
        )?;
        client.server.handle_line(&RpcRequest::notification("notifications/initialized").encode());
        Ok(client)
    }

    pub fn server(&self) -> &McpServer {
        &self.server
    }

    pub fn server_mut(&mut self) -> &mut McpServer {
        &mut self.server
    }

    pub fn into_server(self) -> McpServer {
        self.server
    }

    /// Sends one request and returns its result, checking that the response
    /// echoes the request id.
    pub fn request(&mut self, method: &str, params: Value) -> Result<Value, RpcError> {
        let id = RequestId::from(self.next_id);
        self.next_id += 1;
        let line = RpcRequest::new(id.clone(), method, params).encode();
        let reply = self
            .server
            .handle_line(&line)
            .ok_or_else(|| RpcError::new(INTERNAL_ERROR, format!("no response to request {id}")))?;
        let response = decode_response(&reply).map_err(|e| RpcError::new(INTERNAL_ERROR, e))?;
        if response.id.as_ref() != Some(&id) {
            return Err(RpcError::new(
                INTERNAL_ERROR,
                format!("response id {:?} does not match request {id}", response.id),
            ));
        }
        response.outcome
    }

    pub fn list_tools(&mut self) -> Result<Vec<WireTool>, RpcError> {
        let result = self.request("tools/list", json!({}))?;
        serde_json::from_value(result["tools"].clone())
            .map_err(|e| RpcError::new(INTERNAL_ERROR, format!("malformed tools/list result: {e}")))
    }

    pub fn call(&mut self, name: &str, arguments: Value) -> Result<ToolResult, RpcError> {
        let result = self.request("tools/call", json!({"name": name, "arguments": arguments}))?;
        serde_json::from_value(result)
            .map_err(|e| RpcError::new(INTERNAL_ERROR, format!("malformed tools/call result: {e}")))
    }
}

impl ToolSurface for WireClient {
    /// Protocol-level failures are folded into an error result.
    fn call_tool(&mut self, name: &str, arguments: Value) -> ToolResult {
        self.call(name, arguments)
            .unwrap_or_else(|e| ToolResult::error(format!("protocol error: {e}")))
    }
}
