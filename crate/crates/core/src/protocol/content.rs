use base64::Engine as _;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const PNG_MIME: &str = "image/png";

/// One item of a tool result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Content {
    Text {
        text: String,
    },
    Image {
        /// Base64-encoded image bytes.
        data: String,
        #[serde(rename = "mimeType")]
        mime_type: String,
    },
}

/// Outcome of a `tools/call`. Failures are reported here with `is_error`
/// set, never as JSON-RPC errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolResult {
    pub content: Vec<Content>,
    #[serde(rename = "isError", default)]
    pub is_error: bool,
}

impl ToolResult {
    pub fn text(text: impl Into<String>) -> Self {
        ToolResult {
            content: vec![Content::Text { text: text.into() }],
            is_error: false,
        }
    }

    pub fn error(message: impl Into<String>) -> Self {
        ToolResult {
            content: vec![Content::Text {
                text: format!("error: {}", message.into()),
            }],
            is_error: true,
        }
    }

    /// Text followed by the payload as a fenced JSON block.
    pub fn with_payload(text: impl Into<String>, payload: &Value) -> Self {
        let pretty = serde_json::to_string_pretty(payload).unwrap_or_else(|_| payload.to_string());
        Self::text(format!("{}\n\n```json\n{pretty}\n```", text.into()))
    }

    /// Prepends a PNG image item.
    pub fn with_png(mut self, png: &[u8]) -> Self {
        self.content.insert(
            0,
            Content::Image {
                data: base64::engine::general_purpose::STANDARD.encode(png),
                mime_type: PNG_MIME.to_string(),
            },
        );
        self
    }

    /// All text items joined by newlines.
    pub fn joined_text(&self) -> String {
        self.content
            .iter()
            .filter_map(|c| match c {
                Content::Text { text } => Some(text.as_str()),
                Content::Image { .. } => None,
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// Decoded bytes of every image item.
    pub fn images(&self) -> Vec<Vec<u8>> {
        self.content
            .iter()
            .filter_map(|c| match c {
                Content::Image { data, .. } => base64::engine::general_purpose::STANDARD.decode(data).ok(),
                Content::Text { .. } => None,
            })
            .collect()
    }

    pub fn image_count(&self) -> usize {
        self.content
            .iter()
            .filter(|c| matches!(c, Content::Image { .. }))
            .count()
    }

    /// The structured payload embedded as a fenced JSON block, if any.
    pub fn payload(&self) -> Option<Value> {
        self.content.iter().find_map(|c| match c {
            Content::Text { text } => extract_json_block(text),
            Content::Image { .. } => None,
        })
    }
}

fn extract_json_block(text: &str) -> Option<Value> {
    let start = text.find("```json\n")? + "```json\n".len();
    let end = text[start..].find("\n```")? + start;
    serde_json::from_str(&text[start..end]).ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn payload_round_trips_through_text() {
        let payload = json!({"area": 2.0106, "range": [0.0, 0.866]});
        let result = ToolResult::with_payload("surface area 2.0106", &payload);
        assert_eq!(result.payload(), Some(payload));
        assert!(result.joined_text().starts_with("surface area"));
    }

    #[test]
    fn wire_form_uses_mcp_field_names() {
        let result = ToolResult::text("hi").with_png(&[1, 2, 3]);
        let wire = serde_json::to_value(&result).unwrap();
        assert_eq!(wire["content"][0]["type"], "image");
        assert_eq!(wire["content"][0]["mimeType"], PNG_MIME);
        assert_eq!(wire["content"][1], json!({"type": "text", "text": "hi"}));
        assert_eq!(wire["isError"], false);
        let back: ToolResult = serde_json::from_value(wire).unwrap();
        assert_eq!(back.images(), vec![vec![1, 2, 3]]);
    }

    #[test]
    fn error_results_carry_text() {
        let result = ToolResult::error("unknown tool 'x'");
        assert!(result.is_error);
        assert_eq!(result.content.len(), 1);
        assert_eq!(result.payload(), None);
    }
}
