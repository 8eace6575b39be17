use std::io::{self, BufRead, Write};
use std::panic::{self, AssertUnwindSafe};

use serde_json::{json, Value};

use crate::tools::{Manager, ToolSurface};

use super::message::{
    decode_value, RpcError, RpcRequest, RpcResponse, INTERNAL_ERROR, INVALID_PARAMS, INVALID_REQUEST,
    METHOD_NOT_FOUND, PARSE_ERROR, SERVER_NOT_INITIALIZED,
};
use super::ToolResult;

/// The only protocol revision this server speaks.
pub const PROTOCOL_VERSION: &str = "2025-06-18";
pub const SERVER_NAME: &str = "vizbridge-mcp";

#[derive(Debug)]
pub struct McpServer {
    manager: Manager,
    initialized: bool,
}

impl McpServer {
    pub fn new(manager: Manager) -> Self {
        McpServer {
            manager,
            initialized: false,
        }
    }

    pub fn manager(&self) -> &Manager {
        &self.manager
    }

    pub fn manager_mut(&mut self) -> &mut Manager {
        &mut self.manager
    }

    pub fn is_initialized(&self) -> bool {
        self.initialized
    }

    /// Handles one input line and returns the encoded response line, if
    /// the message calls for one.
    pub fn handle_line(&mut self, line: &str) -> Option<String> {
        let line = line.trim();
        if line.is_empty() {
            return None;
        }
        let value: Value = match serde_json::from_str(line) {
            Ok(v) => v,
            Err(e) => {
                return Some(RpcResponse::error(None, RpcError::new(PARSE_ERROR, format!("parse error: {e}"))).encode())
            }
        };
        if value.is_array() {
            return Some(
                RpcResponse::error(None, RpcError::new(INVALID_REQUEST, "batch requests are not supported")).encode(),
            );
        }
        let request = match decode_value(value) {
            Ok(r) => r,
            Err(e) => return Some(e.into_response().encode()),
        };
        let id = request.id.clone();
        match panic::catch_unwind(AssertUnwindSafe(|| self.handle_request(request))) {
            Ok(response) => response.map(|r| r.encode()),
            Err(_) => {
                log::error!("request handler panicked");
                id.map(|id| RpcResponse::error(Some(id), RpcError::new(INTERNAL_ERROR, "internal error")).encode())
            }
        }
    }

    /// Handles a decoded request. Notifications never get a response.
    pub fn handle_request(&mut self, request: RpcRequest) -> Option<RpcResponse> {
        let Some(id) = request.id.clone() else {
            log::debug!("notification {}", request.method);
            return None;
        };
        let outcome = self.dispatch(&request);
        Some(RpcResponse { id: Some(id), outcome })
    }

    fn dispatch(&mut self, request: &RpcRequest) -> Result<Value, RpcError> {
        match request.method.as_str() {
            "initialize" => self.initialize(request),
            "ping" => Ok(json!({})),
            _ if !self.initialized => Err(RpcError::new(SERVER_NOT_INITIALIZED, "server not initialized")),
            "tools/list" => Ok(self.tools_list()),
            "tools/call" => Ok(serde_json::to_value(self.tools_call(request)).unwrap_or(Value::Null)),
            other => Err(RpcError::new(METHOD_NOT_FOUND, format!("method not found: {other}"))),
        }
    }

    fn initialize(&mut self, request: &RpcRequest) -> Result<Value, RpcError> {
        if self.initialized {
            return Err(RpcError::new(INVALID_REQUEST, "session already initialized"));
        }
        let requested = request.params.get("protocolVersion").and_then(Value::as_str);
        if requested != Some(PROTOCOL_VERSION) {
            return Err(RpcError::new(INVALID_PARAMS, "unsupported protocol version")
                .with_data(json!({"supported": [PROTOCOL_VERSION], "requested": request.params.get("protocolVersion")})));
        }
        self.initialized = true;
        Ok(json!({
            "protocolVersion": PROTOCOL_VERSION,
            "capabilities": {"tools": {"listChanged": false}},
            "serverInfo": {"name": SERVER_NAME, "version": env!("CARGO_PKG_VERSION")},
            "instructions": "Visualization pipeline tools. Load data first (load_data), then inspect with list_sources and get_scalar_range before creating isosurfaces or volume renderings; check results with take_screenshot.",
        }))
    }

    fn tools_list(&self) -> Value {
        let tools: Vec<Value> = self
            .manager
            .registry()
            .describe_tools()
            .into_iter()
            .map(|d| serde_json::to_value(d.to_wire()).unwrap_or(Value::Null))
            .collect();
        json!({"tools": tools})
    }

    fn tools_call(&mut self, request: &RpcRequest) -> ToolResult {
        let arguments = request.params.get("arguments").cloned().unwrap_or(Value::Null);
        match request.params.get("name") {
            Some(Value::String(name)) => self.manager.call(name, &arguments),
            other => {
                let shown = other.map_or_else(|| "missing".to_string(), Value::to_string);
                self.manager.call_rejected(&shown, &arguments, "tools/call requires a string 'name'")
            }
        }
    }
}

impl ToolSurface for McpServer {
    fn call_tool(&mut self, name: &str, arguments: Value) -> ToolResult {
        self.manager.call(name, &arguments)
    }
}

/// Serves newline-delimited messages from `input` until EOF, flushing after
/// every response.
pub fn serve<R: BufRead, W: Write>(server: &mut McpServer, mut input: R, mut output: W) -> io::Result<()> {
    let mut buf = Vec::new();
    loop {
        buf.clear();
        if input.read_until(b'\n', &mut buf)? == 0 {
            return Ok(());
        }
        let response = match std::str::from_utf8(&buf) {
            Ok(line) => server.handle_line(line),
            Err(_) => Some(RpcResponse::error(None, RpcError::new(PARSE_ERROR, "parse error: input is not UTF-8")).encode()),
        };
        if let Some(line) = response {
            output.write_all(line.as_bytes())?;
            output.write_all(b"\n")?;
            output.flush()?;
        }
    }
}
