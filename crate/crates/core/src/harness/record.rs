use std::fs;
use std::path::Path;

use serde_json::Value;

use crate::engine::Backend;
use crate::tools::LogEntry;

use super::{Expectation, HarnessError, NumericExpectation, Trace, TraceStep};

/// Tolerance of the numeric assertions derived from logged payloads.
pub const RECORD_REL_TOL: f64 = 0.01;

/// Reads a JSON-lines session log and converts it into a trace.
pub fn record(log_path: &Path, name: &str, backend: Backend) -> Result<Trace, HarnessError> {
    let text = fs::read_to_string(log_path).map_err(|source| HarnessError::Io {
        path: log_path.to_path_buf(),
        source,
    })?;
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry: LogEntry = serde_json::from_str(line).map_err(|e| HarnessError::MalformedLog {
            line: i + 1,
            reason: e.to_string(),
        })?;
        entries.push(entry);
    }
    Ok(trace_from_entries(&entries, name, backend))
}

/// One step per entry. Every step asserts the logged error flag; successful
/// steps also assert each numeric payload leaf and the presence of images.
pub fn trace_from_entries(entries: &[LogEntry], name: &str, backend: Backend) -> Trace {
    let steps = entries
        .iter()
        .map(|entry| {
            let mut expect = vec![Expectation::IsError(entry.is_error)];
            if !entry.is_error {
                if let Some(payload) = &entry.payload {
                    numeric_leaves(payload, String::new(), &mut expect);
                }
                if entry.images > 0 {
                    expect.push(Expectation::HasImage(true));
                }
            }
            let arguments = match &entry.arguments {
                Value::Null => Value::Object(Default::default()),
                other => other.clone(),
            };
            TraceStep::agent(entry.tool.clone(), arguments, expect)
        })
        .collect();
    Trace::new(name, backend, steps)
}

fn numeric_leaves(value: &Value, path: String, out: &mut Vec<Expectation>) {
    let child = |key: &str| {
        if path.is_empty() {
            key.to_string()
        } else {
            format!("{path}.{key}")
        }
    };
    match value {
        Value::Number(n) => {
            if let Some(v) = n.as_f64() {
                out.push(Expectation::Numeric(NumericExpectation {
                    path,
                    value: v,
                    rel_tol: RECORD_REL_TOL,
                }));
            }
        }
        Value::Array(items) => {
            for (i, item) in items.iter().enumerate() {
                numeric_leaves(item, child(&i.to_string()), out);
            }
        }
        Value::Object(map) => {
            for (key, item) in map {
                numeric_leaves(item, child(key), out);
            }
        }
        _ => {}
    }
}
