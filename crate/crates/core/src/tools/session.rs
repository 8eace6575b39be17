//! Per-session manager state: active source, screenshot numbering and the
//! append-only session log.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::engine::{EngineError, PipelineSource, SharedEngine, SourceFilter, SourceId, SourceKind};
use crate::protocol::ToolResult;

use super::ToolError;

/// File name of the session log inside the screenshot directory.
pub const SESSION_LOG_FILE: &str = "session.jsonl";

/// One logged tool invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub timestamp: String,
    pub tool: String,
    pub arguments: Value,
    pub is_error: bool,
    /// SHA-256 of the serialized result content.
    pub digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<Value>,
    #[serde(default)]
    pub images: usize,
}

impl LogEntry {
    pub fn new(tool: &str, arguments: &Value, result: &ToolResult) -> Self {
        let serialized = serde_json::to_vec(&result.content).unwrap_or_default();
        LogEntry {
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            tool: tool.to_string(),
            arguments: arguments.clone(),
            is_error: result.is_error,
            digest: hex::encode(Sha256::digest(&serialized)),
            payload: result.payload(),
            images: result.image_count(),
        }
    }
}

/// Append-only record of tool calls, mirrored to a JSON-lines file when a
/// path is configured.
#[derive(Debug, Default)]
pub struct SessionLog {
    entries: Vec<LogEntry>,
    sink: Option<BufWriter<File>>,
}

impl SessionLog {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn to_file(path: &Path) -> io::Result<Self> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(SessionLog {
            entries: Vec::new(),
            sink: Some(BufWriter::new(file)),
        })
    }

    pub fn append(&mut self, entry: LogEntry) {
        if let Some(sink) = &mut self.sink {
            let written = serde_json::to_writer(&mut *sink, &entry)
                .map_err(io::Error::from)
                .and_then(|_| sink.write_all(b"\n"))
                .and_then(|_| sink.flush());
            if let Err(e) = written {
                log::warn!("session log write failed: {e}");
            }
        }
        self.entries.push(entry);
    }

    pub fn entries(&self) -> &[LogEntry] {
        &self.entries
    }
}

/// State the curated tools operate on.
#[derive(Debug)]
pub struct SessionContext {
    pub(crate) engine: SharedEngine,
    pub(crate) active: Option<SourceId>,
    pub(crate) screenshot_dir: PathBuf,
    pub(crate) shots: u32,
    pub(crate) log: SessionLog,
}

impl SessionContext {
    pub fn new(engine: SharedEngine, screenshot_dir: PathBuf, log: SessionLog) -> Self {
        SessionContext {
            engine,
            active: None,
            screenshot_dir,
            shots: 0,
            log,
        }
    }

    /// Drops the active source if it no longer exists in the engine (it may
    /// have been deleted by another client of the shared session).
    pub(crate) fn refresh_active(&mut self) {
        if let Some(id) = &self.active {
            if let Err(EngineError::UnknownSource(_)) = self.engine.lock().source(id) {
                self.active = None;
            }
        }
    }

    pub(crate) fn active_source(&self) -> Result<PipelineSource, ToolError> {
        let id = self.active.as_ref().ok_or(ToolError::NoActiveSource)?;
        Ok(self.engine.lock().source(id)?)
    }

    /// Exact id, then exact name, then a unique case-insensitive substring.
    pub(crate) fn resolve(&self, target: &str) -> Result<PipelineSource, ToolError> {
        let sources = self.engine.lock().list_sources(&SourceFilter::default())?;
        if let Some(s) = sources.iter().find(|s| s.id.as_str() == target) {
            return Ok(s.clone());
        }
        if let Some(s) = sources.iter().find(|s| s.name == target) {
            return Ok(s.clone());
        }
        let needle = target.to_lowercase();
        let matches: Vec<&PipelineSource> = sources
            .iter()
            .filter(|s| s.name.to_lowercase().contains(&needle))
            .collect();
        match matches.as_slice() {
            [one] => Ok((*one).clone()),
            [] => Err(ToolError::Usage(format!("no source matches '{target}'"))),
            many => Err(ToolError::Usage(format!(
                "'{target}' is ambiguous; it matches {}",
                many.iter()
                    .map(|s| format!("'{}' ({})", s.name, s.id))
                    .collect::<Vec<_>>()
                    .join(", ")
            ))),
        }
    }

    /// The volume representation addressed by the active source: the active
    /// source itself or the volume child of the active reader.
    pub(crate) fn active_volume(&self) -> Result<PipelineSource, ToolError> {
        let active = self.active_source()?;
        match active.kind {
            SourceKind::VolumeRepr => Ok(active),
            SourceKind::Reader => self
                .volume_of(&active.id)?
                .ok_or_else(|| {
                    ToolError::Engine(EngineError::NotApplicable(format!(
                        "'{}' has no volume representation; call toggle_volume_rendering first",
                        active.name
                    )))
                }),
            SourceKind::Contour => Err(ToolError::Engine(EngineError::NotApplicable(format!(
                "'{}' is a contour; select a reader with a volume representation",
                active.name
            )))),
        }
    }

    pub(crate) fn volume_of(&self, reader: &SourceId) -> Result<Option<PipelineSource>, ToolError> {
        Ok(self
            .engine
            .lock()
            .list_sources(&SourceFilter::kind(SourceKind::VolumeRepr))?
            .into_iter()
            .find(|s| s.parent_id.as_ref() == Some(reader)))
    }

    pub(crate) fn next_screenshot_path(&self) -> PathBuf {
        self.screenshot_dir.join(format!("shot-{:04}.png", self.shots + 1))
    }
}
