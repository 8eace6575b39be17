//! Deterministic stand-in for the language-model client.
//!
//! A [`Trace`] is an ordered list of tool calls with expectations.
//! [`replay`] drives it through the encoded MCP wire path and reports every
//! step; [`record`] turns a session log back into a trace. Steps may also
//! be performed by a simulated GUI user who mutates the shared engine
//! directly, between agent calls.

mod record;
mod replay;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::engine::{Backend, PipelineSource, SharedEngine, SourceFilter, SourceKind, TransferFunction};

pub use record::{record, trace_from_entries, RECORD_REL_TOL};
pub use replay::{check_expectations, replay, ReplayReport, StepReport};

pub const TRACE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("cannot read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed session log at line {line}: {reason}")]
    MalformedLog { line: usize, reason: String },
    #[error("malformed trace: {0}")]
    MalformedTrace(String),
    #[error("trace targets the {trace} backend but the server runs {server}")]
    BackendMismatch { trace: Backend, server: Backend },
    #[error("protocol error: {0}")]
    Protocol(String),
}

/// Who performs a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Actor {
    /// A `tools/call` over the wire.
    #[default]
    Agent,
    /// A direct engine mutation by the human sharing the session.
    Gui,
}

impl Actor {
    fn is_agent(&self) -> bool {
        *self == Actor::Agent
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expectation {
    TextContains(String),
    Numeric(NumericExpectation),
    IsError(bool),
    HasImage(bool),
}

/// `path` addresses the result payload with dot-separated keys and array
/// indices, e.g. `bins.0.count`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericExpectation {
    pub path: String,
    pub value: f64,
    pub rel_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceStep {
    pub tool: String,
    #[serde(default = "empty_object")]
    pub arguments: Value,
    #[serde(default, skip_serializing_if = "Actor::is_agent")]
    pub actor: Actor,
    /// All must hold. Without an `is_error` entry the step must succeed.
    #[serde(default, deserialize_with = "one_or_many", skip_serializing_if = "Vec::is_empty")]
    pub expect: Vec<Expectation>,
}

impl TraceStep {
    pub fn agent(tool: impl Into<String>, arguments: Value, expect: Vec<Expectation>) -> Self {
        TraceStep {
            tool: tool.into(),
            arguments,
            actor: Actor::Agent,
            expect,
        }
    }

    pub fn gui(action: impl Into<String>, arguments: Value, expect: Vec<Expectation>) -> Self {
        TraceStep {
            actor: Actor::Gui,
            ..TraceStep::agent(action, arguments, expect)
        }
    }
}

fn empty_object() -> Value {
    Value::Object(Map::new())
}

fn one_or_many<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Expectation>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        Many(Vec<Expectation>),
        One(Expectation),
    }
    Ok(match OneOrMany::deserialize(d)? {
        OneOrMany::Many(v) => v,
        OneOrMany::One(e) => vec![e],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Trace {
    pub trace_version: u32,
    pub name: String,
    pub backend: Backend,
    /// Free-form context, e.g. a description of the visual example the
    /// session reproduces.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
    pub steps: Vec<TraceStep>,
}

impl Trace {
    pub fn new(name: impl Into<String>, backend: Backend, steps: Vec<TraceStep>) -> Self {
        Trace {
            trace_version: TRACE_VERSION,
            name: name.into(),
            backend,
            comment: None,
            steps,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let trace: Trace = serde_json::from_str(text).map_err(|e| HarnessError::MalformedTrace(e.to_string()))?;
        if trace.trace_version != TRACE_VERSION {
            return Err(HarnessError::MalformedTrace(format!(
                "unsupported trace_version {} (expected {TRACE_VERSION})",
                trace.trace_version
            )));
        }
        if let Some((i, step)) = trace.steps.iter().enumerate().find(|(_, s)| !s.arguments.is_object()) {
            return Err(HarnessError::MalformedTrace(format!(
                "step {i} ({}): arguments must be an object",
                step.tool
            )));
        }
        Ok(trace)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).unwrap_or_default()
    }
}

const BUNDLED: [(&str, &str); 4] = [
    ("iso-half", include_str!("../../traces/iso-half.json")),
    ("tf-bands", include_str!("../../traces/tf-bands.json")),
    ("shared-session", include_str!("../../traces/shared-session.json")),
    ("error-handling", include_str!("../../traces/error-handling.json")),
];

pub fn bundled_names() -> Vec<&'static str> {
    BUNDLED.iter().map(|(name, _)| *name).collect()
}

/// A trace shipped with the crate, by name.
pub fn bundled(name: &str) -> Option<Trace> {
    BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .and_then(|(_, text)| Trace::from_json(text).ok())
}

/// Pipeline state compared when checking that two sessions are equivalent:
/// every source's kind, parameters and visibility plus each volume's
/// transfer function, in creation order.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineSnapshot {
    pub sources: Vec<(SourceKind, Map<String, Value>, bool)>,
    pub transfer_functions: Vec<TransferFunction>,
}

impl PipelineSnapshot {
    pub fn capture(engine: &SharedEngine) -> Result<Self, HarnessError> {
        let mut engine = engine.lock();
        let protocol = |e: crate::engine::EngineError| HarnessError::Protocol(e.to_string());
        let sources: Vec<PipelineSource> = engine.list_sources(&SourceFilter::default()).map_err(protocol)?;
        let mut transfer_functions = Vec::new();
        for s in sources.iter().filter(|s| s.kind == SourceKind::VolumeRepr) {
            transfer_functions.push(engine.transfer_function(&s.id).map_err(protocol)?);
        }
        Ok(PipelineSnapshot {
            sources: sources.into_iter().map(|s| (s.kind, s.params, s.visible)).collect(),
            transfer_functions,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn bundled_traces_parse() {
        for name in bundled_names() {
            let trace = bundled(name).unwrap_or_else(|| panic!("{name} does not parse"));
            assert_eq!(trace.name, name);
            assert!(!trace.steps.is_empty());
        }
        assert!(bundled("nope").is_none());
    }

    #[test]
    fn trace_json_round_trip() {
        let mut trace = Trace::new(
            "t",
            Backend::Mock,
            vec![
                TraceStep::agent(
                    "get_surface_area",
                    json!({}),
                    vec![Expectation::Numeric(NumericExpectation {
                        path: "area".into(),
                        value: 2.0,
                        rel_tol: 0.01,
                    })],
                ),
                TraceStep::gui("orbit", json!({"azimuth": 10, "elevation": 0}), vec![]),
            ],
        );
        trace.comment = Some("reproduce a reference image".into());
        let text = trace.to_json_pretty();
        assert!(!text.contains("\"actor\": \"agent\""));
        assert_eq!(Trace::from_json(&text).unwrap(), trace);
    }

    #[test]
    fn single_expectation_object_is_accepted() {
        let trace = Trace::from_json(
            r#"{"trace_version":1,"name":"x","backend":"mock","steps":[{"tool":"list_sources","expect":{"is_error":false}}]}"#,
        )
        .unwrap();
        assert_eq!(trace.steps[0].expect, vec![Expectation::IsError(false)]);
        assert_eq!(trace.steps[0].arguments, json!({}));
    }

    #[test]
    fn rejects_bad_traces() {
        let bad = [
            r#"{"trace_version":2,"name":"x","backend":"mock","steps":[]}"#,
            r#"{"trace_version":1,"name":"x","backend":"vtk","steps":[]}"#,
            r#"{"trace_version":1,"name":"x","backend":"mock","steps":[{"tool":"a","arguments":[1]}]}"#,
            r#"{"trace_version":1,"name":"x","backend":"mock","steps":[{"tool":"a","expect":{"bogus":1}}]}"#,
        ];
        for text in bad {
            assert!(matches!(Trace::from_json(text), Err(HarnessError::MalformedTrace(_))), "{text}");
        }
    }
}
