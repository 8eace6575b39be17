//! JSON-RPC 2.0 message codec (one message per line).

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

pub const PARSE_ERROR: i64 = -32700;
pub const INVALID_REQUEST: i64 = -32600;
pub const METHOD_NOT_FOUND: i64 = -32601;
pub const INVALID_PARAMS: i64 = -32602;
pub const INTERNAL_ERROR: i64 = -32603;
pub const SERVER_NOT_INITIALIZED: i64 = -32002;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RequestId {
    Number(serde_json::Number),
    String(String),
}

impl RequestId {
    fn from_value(value: &Value) -> Option<Self> {
        match value {
            Value::Number(n) => Some(RequestId::Number(n.clone())),
            Value::String(s) => Some(RequestId::String(s.clone())),
            _ => None,
        }
    }

    fn to_value(&self) -> Value {
        match self {
            RequestId::Number(n) => Value::Number(n.clone()),
            RequestId::String(s) => Value::String(s.clone()),
        }
    }
}

impl From<i64> for RequestId {
    fn from(n: i64) -> Self {
        RequestId::Number(n.into())
    }
}

impl From<&str> for RequestId {
    fn from(s: &str) -> Self {
        RequestId::String(s.to_string())
    }
}

impl fmt::Display for RequestId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RequestId::Number(n) => write!(f, "{n}"),
            RequestId::String(s) => write!(f, "{s:?}"),
        }
    }
}

/// A decoded request. `id == None` marks a notification.
#[derive(Debug, Clone, PartialEq)]
pub struct RpcRequest {
    pub id: Option<RequestId>,
    pub method: String,
    pub params: Map<String, Value>,
}

impl RpcRequest {
    pub fn new(id: impl Into<RequestId>, method: impl Into<String>, params: Value) -> Self {
        RpcRequest {
            id: Some(id.into()),
            method: method.into(),
            params: match params {
                Value::Object(map) => map,
                _ => Map::new(),
            },
        }
    }

    pub fn notification(method: impl Into<String>) -> Self {
        RpcRequest {
            id: None,
            method: method.into(),
            params: Map::new(),
        }
    }

    pub fn is_notification(&self) -> bool {
        self.id.is_none()
    }

    pub fn to_value(&self) -> Value {
        let mut obj = Map::new();
        obj.insert("jsonrpc".into(), json!("2.0"));
        if let Some(id) = &self.id {
            obj.insert("id".into(), id.to_value());
        }
        obj.insert("method".into(), Value::String(self.method.clone()));
        if !self.params.is_empty() {
            obj.insert("params".into(), Value::Object(self.params.clone()));
        }
        Value::Object(obj)
    }

    /// Serializes as a single line (no trailing newline).
    pub fn encode(&self) -> String {
        self.to_value().to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RpcError {
    pub code: i64,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<Value>,
}

impl RpcError {
    pub fn new(code: i64, message: impl Into<String>) -> Self {
        RpcError {
            code,
            message: message.into(),
            data: None,
        }
    }

    pub fn with_data(mut self, data: Value) -> Self {
        self.data = Some(data);
        self
    }
}

impl fmt::Display for RpcError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({})", self.message, self.code)
    }
}

/// A response; `id == None` only for errors on undecodable requests.
#[derive(Debug, Clone, PartialEq)]
pub struct RpcResponse {
    pub id: Option<RequestId>,
    pub outcome: Result<Value, RpcError>,
}

impl RpcResponse {
    pub fn result(id: RequestId, result: Value) -> Self {
        RpcResponse {
            id: Some(id),
            outcome: Ok(result),
        }
    }

    pub fn error(id: Option<RequestId>, error: RpcError) -> Self {
        RpcResponse {
            id,
            outcome: Err(error),
        }
    }

    pub fn to_value(&self) -> Value {
        let mut obj = Map::new();
        obj.insert("jsonrpc".into(), json!("2.0"));
        obj.insert("id".into(), self.id.as_ref().map_or(Value::Null, RequestId::to_value));
        match &self.outcome {
            Ok(result) => obj.insert("result".into(), result.clone()),
            Err(error) => obj.insert("error".into(), json!(error)),
        };
        Value::Object(obj)
    }

    pub fn encode(&self) -> String {
        self.to_value().to_string()
    }
}

/// A request that could not be decoded, with whatever id was recoverable.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeError {
    pub id: Option<RequestId>,
    pub error: RpcError,
}

impl DecodeError {
    pub fn into_response(self) -> RpcResponse {
        RpcResponse::error(self.id, self.error)
    }
}

pub fn decode_message(line: &str) -> Result<RpcRequest, DecodeError> {
    let value: Value = serde_json::from_str(line).map_err(|e| DecodeError {
        id: None,
        error: RpcError::new(PARSE_ERROR, format!("parse error: {e}")),
    })?;
    decode_value(value)
}

pub fn decode_value(value: Value) -> Result<RpcRequest, DecodeError> {
    let invalid = |id: Option<RequestId>, msg: &str| DecodeError {
        id,
        error: RpcError::new(INVALID_REQUEST, format!("invalid request: {msg}")),
    };
    let Value::Object(mut obj) = value else {
        return Err(invalid(None, "expected a JSON object"));
    };
    let id = match obj.remove("id") {
        None | Some(Value::Null) => None,
        Some(v) => match RequestId::from_value(&v) {
            Some(id) => Some(id),
            None => return Err(invalid(None, "id must be a number, string or null")),
        },
    };
    if obj.get("jsonrpc").and_then(Value::as_str) != Some("2.0") {
        return Err(invalid(id, "jsonrpc must be \"2.0\""));
    }
    let method = match obj.remove("method") {
        Some(Value::String(m)) => m,
        Some(_) => return Err(invalid(id, "method must be a string")),
        None => return Err(invalid(id, "missing method")),
    };
    let params = match obj.remove("params") {
        None | Some(Value::Null) => Map::new(),
        Some(Value::Object(map)) => map,
        Some(_) => {
            return Err(DecodeError {
                id,
                error: RpcError::new(INVALID_PARAMS, "params must be an object"),
            })
        }
    };
    Ok(RpcRequest { id, method, params })
}

/// Client-side decoding of a response line.
pub fn decode_response(line: &str) -> Result<RpcResponse, String> {
    let value: Value = serde_json::from_str(line).map_err(|e| format!("malformed response: {e}"))?;
    let Value::Object(mut obj) = value else {
        return Err("response is not an object".into());
    };
    if obj.get("jsonrpc").and_then(Value::as_str) != Some("2.0") {
        return Err("response lacks jsonrpc 2.0 marker".into());
    }
    let id = obj.remove("id").as_ref().and_then(RequestId::from_value);
    let outcome = match (obj.remove("result"), obj.remove("error")) {
        (Some(result), None) => Ok(result),
        (None, Some(error)) => Err(serde_json::from_value(error).map_err(|e| format!("malformed error: {e}"))?),
        _ => return Err("response must carry exactly one of result/error".into()),
    };
    Ok(RpcResponse { id, outcome })
}
