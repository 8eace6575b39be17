//! The curated tool layer between MCP clients and the engine.
//!
//! A fixed registry of named tools, each with a descriptor whose parameter
//! schema is both advertised to clients and enforced before the handler
//! runs. The [`Manager`] owns the only state kept between calls: the active
//! source and the session log. Everything else is read from the engine on
//! every call, so mutations made by another client of the same engine are
//! seen immediately.

mod catalog;
pub mod schema;
mod session;

use std::panic::{self, AssertUnwindSafe};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::engine::{EngineError, SharedEngine, SourceId};
use crate::protocol::ToolResult;

pub use catalog::MAX_HISTOGRAM_BINS;
pub use schema::{Param, Schema, Violation};
pub use session::{LogEntry, SessionContext, SessionLog, SESSION_LOG_FILE};

#[derive(Debug, Error)]
pub enum ToolError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("no active source; call load_data or set_active_source first")]
    NoActiveSource,
    #[error("{0}")]
    Usage(String),
}

/// What a handler produces before it is wrapped into a [`ToolResult`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ToolOutput {
    pub text: String,
    pub payload: Option<Value>,
    pub image: Option<Vec<u8>>,
}

impl ToolOutput {
    pub fn new(text: impl Into<String>) -> Self {
        ToolOutput {
            text: text.into(),
            ..Default::default()
        }
    }

    pub fn payload(mut self, payload: Value) -> Self {
        self.payload = Some(payload);
        self
    }

    pub fn image(mut self, png: Vec<u8>) -> Self {
        self.image = Some(png);
        self
    }

    pub fn into_result(self) -> ToolResult {
        let result = match &self.payload {
            Some(payload) => ToolResult::with_payload(self.text, payload),
            None => ToolResult::text(self.text),
        };
        match &self.image {
            Some(png) => result.with_png(png),
            None => result,
        }
    }
}

pub(crate) type Handler = fn(&mut SessionContext, &Map<String, Value>) -> Result<ToolOutput, ToolError>;

#[derive(Debug, Clone, PartialEq)]
pub struct ToolDescriptor {
    pub name: &'static str,
    pub description: &'static str,
    pub params: Vec<Param>,
    pub returns: &'static str,
}

const RETURNS_MARKER: &str = "\n\nReturns: ";

impl ToolDescriptor {
    pub fn input_schema(&self) -> Schema {
        Schema::Object(self.params.clone())
    }

    /// The `tools/list` entry. The return description is appended to the
    /// description after a `Returns:` marker.
    pub fn to_wire(&self) -> WireTool {
        WireTool {
            name: self.name.to_string(),
            description: format!("{}{RETURNS_MARKER}{}", self.description, self.returns),
            input_schema: self.input_schema().to_json(),
        }
    }
}

/// A tool as listed on the wire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireTool {
    pub name: String,
    pub description: String,
    #[serde(rename = "inputSchema")]
    pub input_schema: Value,
}

impl WireTool {
    /// Splits the description into purpose and return description.
    pub fn purpose_and_returns(&self) -> (&str, Option<&str>) {
        match self.description.rsplit_once(RETURNS_MARKER) {
            Some((purpose, returns)) => (purpose, Some(returns)),
            None => (&self.description, None),
        }
    }
}

pub(crate) struct RegisteredTool {
    pub(crate) descriptor: ToolDescriptor,
    pub(crate) handler: Handler,
}

pub struct ToolRegistry {
    tools: Vec<RegisteredTool>,
}

impl ToolRegistry {
    pub fn curated() -> Self {
        ToolRegistry {
            tools: catalog::curated(),
        }
    }

    pub fn empty() -> Self {
        ToolRegistry { tools: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.tools.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tools.is_empty()
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.tools.iter().map(|t| t.descriptor.name).collect()
    }

    /// Every descriptor, in registration order.
    pub fn describe_tools(&self) -> Vec<&ToolDescriptor> {
        self.tools.iter().map(|t| &t.descriptor).collect()
    }

    pub fn descriptor(&self, name: &str) -> Option<&ToolDescriptor> {
        self.get(name).map(|t| &t.descriptor)
    }

    fn get(&self, name: &str) -> Option<&RegisteredTool> {
        self.tools.iter().find(|t| t.descriptor.name == name)
    }
}

impl std::fmt::Debug for ToolRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ToolRegistry").field("tools", &self.names()).finish()
    }
}

/// Anything tools can be called through: the manager itself, the MCP
/// server, or a client speaking the wire protocol.
pub trait ToolSurface {
    fn call_tool(&mut self, name: &str, arguments: Value) -> ToolResult;
}

/// Dispatches tool calls against a session.
#[derive(Debug)]
pub struct Manager {
    registry: ToolRegistry,
    ctx: SessionContext,
}

impl Manager {
    pub fn new(registry: ToolRegistry, ctx: SessionContext) -> Self {
        Manager { registry, ctx }
    }

    /// Curated tools over `engine` with an in-memory log.
    pub fn with_engine(engine: SharedEngine, screenshot_dir: impl Into<PathBuf>) -> Self {
        Manager::new(
            ToolRegistry::curated(),
            SessionContext::new(engine, screenshot_dir.into(), SessionLog::in_memory()),
        )
    }

    pub fn registry(&self) -> &ToolRegistry {
        &self.registry
    }

    pub fn engine(&self) -> &SharedEngine {
        &self.ctx.engine
    }

    pub fn log(&self) -> &SessionLog {
        &self.ctx.log
    }

    pub fn active_source_id(&self) -> Option<&SourceId> {
        self.ctx.active.as_ref()
    }

    /// Selects the active source directly, bypassing the tool surface.
    pub fn set_active(&mut self, id: Option<SourceId>) {
        self.ctx.active = id;
    }

    /// Runs one tool call. Never panics; every failure is an error result
    /// and every call, failed or not, appends one log entry.
    pub fn call(&mut self, name: &str, arguments: &Value) -> ToolResult {
        let result = self.dispatch(name, arguments);
        self.ctx.log.append(LogEntry::new(name, arguments, &result));
        result
    }

    /// Logs and returns an error for a call that never reached a tool.
    pub fn call_rejected(&mut self, name: &str, arguments: &Value, reason: &str) -> ToolResult {
        let result = ToolResult::error(reason);
        self.ctx.log.append(LogEntry::new(name, arguments, &result));
        result
    }

    fn dispatch(&mut self, name: &str, arguments: &Value) -> ToolResult {
        self.ctx.refresh_active();
        let Some(tool) = self.registry.get(name) else {
            return ToolResult::error(format!("unknown tool '{name}'"));
        };
        let empty = Map::new();
        let args = match arguments {
            Value::Object(obj) => obj,
            Value::Null => &empty,
            other => {
                return ToolResult::error(format!(
                    "arguments for '{name}' must be an object, got {other}"
                ))
            }
        };
        if let Err(violation) = tool.descriptor.input_schema().validate(&Value::Object(args.clone())) {
            return ToolResult::error(violation.to_string());
        }
        let handler = tool.handler;
        let ctx = &mut self.ctx;
        match panic::catch_unwind(AssertUnwindSafe(|| handler(ctx, args))) {
            Ok(Ok(output)) => output.into_result(),
            Ok(Err(e)) => ToolResult::error(e.to_string()),
            Err(_) => {
                log::error!("tool '{name}' panicked");
                ToolResult::error(format!("internal error in tool '{name}'"))
            }
        }
    }
}

impl ToolSurface for Manager {
    fn call_tool(&mut self, name: &str, arguments: Value) -> ToolResult {
        self.call(name, &arguments)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{EngineError, SourceFilter, SourceKind};
    use serde_json::json;

    fn manager() -> (Manager, tempfile::TempDir) {
        let dir = tempfile::tempdir().unwrap();
        (Manager::with_engine(SharedEngine::mock(), dir.path()), dir)
    }

    fn ok(m: &mut Manager, tool: &str, args: Value) -> ToolResult {
        let r = m.call(tool, &args);
        assert!(!r.is_error, "{tool} failed: {}", r.joined_text());
        r
    }

    fn err(m: &mut Manager, tool: &str, args: Value) -> String {
        let r = m.call(tool, &args);
        assert!(r.is_error, "{tool} unexpectedly succeeded: {}", r.joined_text());
        r.joined_text()
    }

    fn area(r: &ToolResult) -> f64 {
        r.payload().unwrap()["area"].as_f64().unwrap()
    }

    fn load_radial(m: &mut Manager) -> ToolResult {
        ok(m, "load_data", json!({"source": {"family": "radial"}}))
    }

    #[test]
    fn registry_names_are_unique_snake_case_with_described_params() {
        let registry = ToolRegistry::curated();
        assert!(registry.len() >= 14);
        let mut names = registry.names();
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), registry.len());
        for d in registry.describe_tools() {
            assert!(d.name.chars().all(|c| c.is_ascii_lowercase() || c == '_'), "{}", d.name);
            assert!(!d.description.is_empty() && !d.returns.is_empty());
            assert!(d.params.iter().all(|p| !p.description.is_empty()), "{}", d.name);
        }
    }

    #[test]
    fn wire_form_round_trips() {
        for d in ToolRegistry::curated().describe_tools() {
            let wire = d.to_wire();
            let back: WireTool = serde_json::from_str(&serde_json::to_string(&wire).unwrap()).unwrap();
            assert_eq!(back, wire);
            assert_eq!(back.purpose_and_returns(), (d.description, Some(d.returns)));
            assert_eq!(back.input_schema, d.input_schema().to_json());
        }
    }

    #[test]
    fn load_data_reports_range_and_activates_reader() {
        let (mut m, _dir) = manager();
        let r = load_radial(&mut m);
        assert!(r.joined_text().contains("loaded reader 'radial-1'"));
        assert!(r.joined_text().contains("scalar range [0, 0.866]"));
        assert_eq!(m.active_source_id().map(SourceId::as_str), Some("s1"));

        ok(&mut m, "load_data", json!({"source": {"family": "linear_x"}}));
        let listing = ok(&mut m, "list_sources", json!({})).payload().unwrap();
        assert_eq!(listing["sources"].as_array().unwrap().len(), 2);
        assert_eq!(listing["active"], "s2");
        assert!(err(&mut m, "load_data", json!({"source": "/no/such/file.vti"})).contains("cannot read"));
    }

    #[test]
    fn active_source_selection_and_ambiguity() {
        let (mut m, _dir) = manager();
        assert_eq!(ok(&mut m, "get_active_source", json!({})).joined_text().lines().next(), Some("no active source"));
        load_radial(&mut m);
        ok(&mut m, "create_isosurface", json!({"value": 0.4}));
        ok(&mut m, "set_active_source", json!({"target": "radial"}));
        ok(&mut m, "set_active_source", json!({"target": "iso"}));
        assert_eq!(m.active_source_id().map(SourceId::as_str), Some("s2"));
        let msg = err(&mut m, "set_active_source", json!({"target": "r"}));
        assert!(msg.contains("radial-1") && msg.contains("isosurface-1"), "{msg}");
        assert!(err(&mut m, "set_active_source", json!({"target": "nothing"})).contains("no source matches"));
        ok(&mut m, "set_active_source", json!({"target": "s1"}));
        assert_eq!(m.active_source_id().map(SourceId::as_str), Some("s1"));
    }

    #[test]
    fn isosurface_tools_report_analytic_areas() {
        let (mut m, _dir) = manager();
        load_radial(&mut m);
        let r = ok(&mut m, "create_isosurface", json!({"value": 0.4}));
        approx::assert_relative_eq!(area(&r), 4.0 * std::f64::consts::PI * 0.16, max_relative = 1e-12);
        assert!(r.joined_text().contains("2.0106"));
        let msg = err(&mut m, "create_isosurface", json!({"value": 0.2}));
        assert!(msg.contains("not applicable"), "{msg}");
        ok(&mut m, "update_isosurface", json!({"value": 0.2}));
        let r = ok(&mut m, "get_surface_area", json!({}));
        approx::assert_relative_eq!(area(&r), 4.0 * std::f64::consts::PI * 0.04, max_relative = 1e-12);
        assert!(r.joined_text().contains("0.5027"));
        let msg = err(&mut m, "update_isosurface", json!({"value": 0.9}));
        assert!(msg.contains("out of range"), "{msg}");
    }

    #[test]
    fn range_and_histogram_need_an_active_source() {
        let (mut m, _dir) = manager();
        assert!(err(&mut m, "get_scalar_range", json!({})).contains("no active source"));
        assert!(err(&mut m, "get_histogram", json!({"bins": 4})).contains("no active source"));
        ok(&mut m, "load_data", json!({"source": {"family": "linear_x"}}));
        assert!(err(&mut m, "get_histogram", json!({"bins": 0})).contains("`bins`"));
        let h = ok(&mut m, "get_histogram", json!({"bins": 4})).payload().unwrap();
        let counts: Vec<u64> = h["bins"].as_array().unwrap().iter().map(|b| b["count"].as_u64().unwrap()).collect();
        assert_eq!(counts, vec![65536; 4]);
        assert_eq!(h["total"], 64 * 64 * 64);
    }

    #[test]
    fn transfer_function_tools() {
        let (mut m, _dir) = manager();
        load_radial(&mut m);
        let msg = err(&mut m, "set_color_map", json!({"points": [[0, 0, 0, 0], [0.8, 1, 1, 1]]}));
        assert!(msg.contains("toggle_volume_rendering"), "{msg}");
        ok(&mut m, "toggle_volume_rendering", json!({}));
        ok(&mut m, "set_color_map", json!({"points": [[0, 0.55, 0.27, 0.07], [0.87, 0.0, 0.8, 0.0]]}));
        let msg = err(&mut m, "set_color_map", json!({"points": [[0.5, 0, 0, 0], [0.2, 1, 1, 1]]}));
        assert!(msg.contains("index 1"), "{msg}");
        ok(&mut m, "set_opacity_map", json!({"points": [[0, 0.5], [0.866, 0.5]]}));
        let tf = ok(&mut m, "get_transfer_function", json!({})).payload().unwrap();
        assert_eq!(tf["color_points"][1], json!([0.87, 0.0, 0.8, 0.0]));
        assert_eq!(tf["opacity_points"][0], json!([0.0, 0.5]));

        let shot = ok(&mut m, "take_screenshot", json!({})).payload().unwrap();
        let bands = shot["band_report"].as_array().unwrap();
        let low = &bands[0];
        let high = &bands[7];
        assert!(low["r"].as_f64().unwrap() > low["g"].as_f64().unwrap(), "low band should be brown-ish");
        assert!(high["g"].as_f64().unwrap() > high["r"].as_f64().unwrap(), "high band should be green-ish");

        ok(&mut m, "create_isosurface", json!({"value": 0.3}));
        assert!(err(&mut m, "toggle_volume_rendering", json!({})).contains("not applicable"));
    }

    #[test]
    fn toggle_flips_visibility_of_existing_volume() {
        let (mut m, _dir) = manager();
        load_radial(&mut m);
        let first = ok(&mut m, "toggle_volume_rendering", json!({})).payload().unwrap();
        assert_eq!((first["created"].clone(), first["visible"].clone()), (json!(true), json!(true)));
        let second = ok(&mut m, "toggle_volume_rendering", json!({})).payload().unwrap();
        assert_eq!((second["created"].clone(), second["visible"].clone()), (json!(false), json!(false)));
        assert_eq!(m.active_source_id().map(SourceId::as_str), Some("s1"));
    }

    #[test]
    fn screenshots_are_numbered_and_carry_one_image() {
        let (mut m, dir) = manager();
        assert!(err(&mut m, "take_screenshot", json!({})).contains("nothing to render"));
        load_radial(&mut m);
        ok(&mut m, "toggle_volume_rendering", json!({}));
        let r = ok(&mut m, "take_screenshot", json!({}));
        assert_eq!(r.image_count(), 1);
        assert!(matches!(&r.content[0], crate::protocol::Content::Image { mime_type, .. } if mime_type == "image/png"));
        assert_eq!(r.content.len(), 2);
        ok(&mut m, "take_screenshot", json!({}));
        assert!(dir.path().join("shot-0001.png").is_file());
        assert!(dir.path().join("shot-0002.png").is_file());
        assert_eq!(std::fs::read(dir.path().join("shot-0001.png")).unwrap(), r.images()[0]);
    }

    #[test]
    fn camera_tools() {
        let (mut m, _dir) = manager();
        let r = ok(&mut m, "rotate_camera", json!({"azimuth": 400, "elevation": 120})).payload().unwrap();
        assert_eq!(r["camera"], json!({"azimuth": 40.0, "elevation": 90.0}));
        let r = ok(&mut m, "reset_camera", json!({})).payload().unwrap();
        assert_eq!(r["camera"], json!({"azimuth": 0.0, "elevation": 0.0}));
    }

    #[test]
    fn deleting_the_active_source_clears_it() {
        let (mut m, _dir) = manager();
        load_radial(&mut m);
        ok(&mut m, "create_isosurface", json!({"value": 0.4}));
        assert!(err(&mut m, "delete_source", json!({"target": "radial-1"})).contains("dependent"));
        let r = ok(&mut m, "delete_source", json!({"target": "isosurface-1"}));
        assert!(r.joined_text().contains("active source cleared"));
        assert_eq!(m.active_source_id(), None);
        let r = ok(&mut m, "delete_source", json!({"target": "s1"}));
        assert!(!r.joined_text().contains("active source cleared"));
    }

    #[test]
    fn active_source_deleted_elsewhere_is_dropped() {
        let (mut m, _dir) = manager();
        load_radial(&mut m);
        m.engine().lock().delete_source(&SourceId::from("s1")).unwrap();
        assert_eq!(ok(&mut m, "get_active_source", json!({})).joined_text().lines().next(), Some("no active source"));
    }

    #[test]
    fn external_mutations_are_visible_immediately() {
        let (mut m, _dir) = manager();
        load_radial(&mut m);
        ok(&mut m, "create_isosurface", json!({"value": 0.4}));
        let gui = m.engine().clone();
        gui.lock().set_contour_value(&SourceId::from("s2"), 0.1).unwrap();
        let r = ok(&mut m, "get_surface_area", json!({}));
        approx::assert_relative_eq!(area(&r), 4.0 * std::f64::consts::PI * 0.01, max_relative = 1e-12);
        gui.lock().set_visibility(&SourceId::from("s2"), false).unwrap();
        let listing = ok(&mut m, "list_sources", json!({"kind": "contour"})).payload().unwrap();
        assert_eq!(listing["sources"][0]["visible"], false);
        let readers = gui.lock().list_sources(&SourceFilter::kind(SourceKind::Reader)).unwrap();
        assert_eq!(readers.len(), 1);
    }

    #[test]
    fn every_call_is_logged_and_failures_are_results() {
        let (mut m, _dir) = manager();
        let calls = [
            ("nope", json!({})),
            ("load_data", json!([1, 2])),
            ("load_data", json!({"source": 3})),
            ("get_histogram", json!({"bins": "many"})),
            ("rotate_camera", json!({"azimuth": 1})),
            ("list_sources", json!({"unexpected": true})),
            ("list_sources", Value::Null),
        ];
        for (i, (tool, args)) in calls.iter().enumerate() {
            let r = m.call(tool, args);
            assert_eq!(r.is_error, i + 1 != calls.len(), "{tool}: {}", r.joined_text());
            assert_eq!(m.log().entries().len(), i + 1);
        }
        assert!(m.log().entries()[0].is_error);
        assert_eq!(m.call("nope", &json!({})).joined_text(), "error: unknown tool 'nope'");
    }

    #[test]
    fn errors_convert_from_engine() {
        let e: ToolError = EngineError::NothingToRender.into();
        assert_eq!(e.to_string(), "nothing to render");
    }
}
