use std::collections::HashSet;
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};

use crate::engine::{EngineResult, SharedEngine, SourceFilter, SourceId};
use crate::protocol::{ToolResult, WireClient};

use super::{Actor, Expectation, HarnessError, Trace, TraceStep};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepReport {
    pub index: usize,
    pub tool: String,
    pub actor: Actor,
    pub passed: bool,
    pub failures: Vec<String>,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplayReport {
    pub trace: String,
    /// Steps actually run; replay halts after the first failing step.
    pub steps: Vec<StepReport>,
    pub passed: bool,
}

impl ReplayReport {
    pub fn failed_step(&self) -> Option<&StepReport> {
        self.steps.iter().find(|s| !s.passed)
    }

    /// One line per step, then a verdict line.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for s in &self.steps {
            let status = if s.passed { "ok  " } else { "FAIL" };
            let actor = if s.actor == Actor::Gui { " (gui)" } else { "" };
            out.push_str(&format!("{status} step {:>3} {}{actor} [{:.2} ms]\n", s.index, s.tool, s.elapsed_ms));
            for f in &s.failures {
                out.push_str(&format!("       {f}\n"));
            }
        }
        match self.failed_step() {
            None => out.push_str(&format!("trace '{}' passed ({} steps)\n", self.trace, self.steps.len())),
            Some(s) => out.push_str(&format!("trace '{}' failed at step {} ({})\n", self.trace, s.index, s.tool)),
        }
        out
    }

    /// The report without timings, for comparing replays.
    pub fn without_timings(&self) -> ReplayReport {
        let mut copy = self.clone();
        for s in &mut copy.steps {
            s.elapsed_ms = 0.0;
        }
        copy
    }
}

/// Replays `trace` through `client`, which must already be initialized.
pub fn replay(trace: &Trace, client: &mut WireClient) -> Result<ReplayReport, HarnessError> {
    let engine = client.server().manager().engine().clone();
    let server_backend = engine.lock().backend();
    if trace.backend != server_backend {
        return Err(HarnessError::BackendMismatch {
            trace: trace.backend,
            server: server_backend,
        });
    }
    let registered: HashSet<String> = client
        .list_tools()
        .map_err(|e| HarnessError::Protocol(e.to_string()))?
        .into_iter()
        .map(|t| t.name)
        .collect();

    let mut steps = Vec::with_capacity(trace.steps.len());
    for (index, step) in trace.steps.iter().enumerate() {
        let start = Instant::now();
        let failures = match run_step(step, client, &engine, &registered) {
            Ok(result) => check_expectations(&step.expect, &result),
            Err(failure) => vec![failure],
        };
        let passed = failures.is_empty();
        steps.push(StepReport {
            index,
            tool: step.tool.clone(),
            actor: step.actor,
            passed,
            failures,
            elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
        });
        if !passed {
            break;
        }
    }
    let passed = steps.len() == trace.steps.len() && steps.iter().all(|s| s.passed);
    Ok(ReplayReport {
        trace: trace.name.clone(),
        steps,
        passed,
    })
}

fn run_step(
    step: &TraceStep,
    client: &mut WireClient,
    engine: &SharedEngine,
    registered: &HashSet<String>,
) -> Result<ToolResult, String> {
    match step.actor {
        Actor::Agent => {
            if !registered.contains(&step.tool) {
                return Err(format!("unknown tool '{}' (not listed by tools/list)", step.tool));
            }
            client
                .call(&step.tool, step.arguments.clone())
                .map_err(|e| format!("protocol error: {e}"))
        }
        Actor::Gui => Ok(match gui_action(engine, &step.tool, &step.arguments) {
            Ok(text) => ToolResult::text(text),
            Err(e) => ToolResult::error(e),
        }),
    }
}

fn resolve(engine: &SharedEngine, target: &str) -> Result<SourceId, String> {
    let sources = engine
        .lock()
        .list_sources(&SourceFilter::default())
        .map_err(|e| e.to_string())?;
    sources
        .into_iter()
        .find(|s| s.id.as_str() == target || s.name == target)
        .map(|s| s.id)
        .ok_or_else(|| format!("no source '{target}'"))
}

/// Applies a GUI-user action straight to the engine.
fn gui_action(engine: &SharedEngine, action: &str, args: &Value) -> Result<String, String> {
    let num = |key: &str| args.get(key).and_then(Value::as_f64).ok_or(format!("gui {action}: missing number '{key}'"));
    let target = || {
        args.get("target")
            .and_then(Value::as_str)
            .ok_or(format!("gui {action}: missing 'target'"))
    };
    let done = |r: EngineResult<()>| r.map_err(|e| e.to_string());
    match action {
        "set_contour_value" => {
            let id = resolve(engine, target()?)?;
            let value = num("value")?;
            engine.lock().set_contour_value(&id, value).map_err(|e| e.to_string())?;
            Ok(format!("gui: contour {id} set to {value}"))
        }
        "set_visibility" => {
            let id = resolve(engine, target()?)?;
            let visible = args
                .get("visible")
                .and_then(Value::as_bool)
                .ok_or(format!("gui {action}: missing boolean 'visible'"))?;
            done(engine.lock().set_visibility(&id, visible))?;
            Ok(format!("gui: {id} visible={visible}"))
        }
        "orbit" => {
            let (azimuth, elevation) = (num("azimuth")?, num("elevation")?);
            done(engine.lock().orbit(azimuth, elevation))?;
            Ok(format!("gui: orbit {azimuth} {elevation}"))
        }
        "reset_camera" => {
            done(engine.lock().reset_camera())?;
            Ok("gui: camera reset".into())
        }
        other => Err(format!("unknown gui action '{other}'")),
    }
}

fn lookup<'a>(payload: &'a Value, path: &str) -> Option<&'a Value> {
    path.split('.').filter(|k| !k.is_empty()).try_fold(payload, |v, key| match v {
        Value::Object(map) => map.get(key),
        Value::Array(items) => key.parse::<usize>().ok().and_then(|i| items.get(i)),
        _ => None,
    })
}

fn excerpt(text: &str) -> String {
    const MAX: usize = 160;
    let first: String = text.chars().take(MAX).collect();
    if first.len() < text.len() {
        format!("{first}…")
    } else {
        first
    }
}

/// Failure messages for every unmet expectation; empty when all hold.
pub fn check_expectations(expect: &[Expectation], result: &ToolResult) -> Vec<String> {
    let mut failures = Vec::new();
    if !expect.iter().any(|e| matches!(e, Expectation::IsError(_))) && result.is_error {
        failures.push(format!("expected success, got {}", excerpt(&result.joined_text())));
    }
    let payload = result.payload().unwrap_or(json!(null));
    for e in expect {
        match e {
            Expectation::IsError(want) if result.is_error != *want => failures.push(format!(
                "expected is_error={want}, got is_error={}: {}",
                result.is_error,
                excerpt(&result.joined_text())
            )),
            Expectation::HasImage(want) if (result.image_count() > 0) != *want => failures.push(format!(
                "expected has_image={want}, got {} image item(s)",
                result.image_count()
            )),
            Expectation::TextContains(needle) => {
                let text = result.joined_text();
                if !text.contains(needle.as_str()) {
                    failures.push(format!("expected text containing '{needle}', got: {}", excerpt(&text)));
                }
            }
            Expectation::Numeric(n) => match lookup(&payload, &n.path).and_then(Value::as_f64) {
                None => failures.push(format!("payload field `{}` is missing or not numeric", n.path)),
                Some(actual) => {
                    let allowed = n.rel_tol * n.value.abs();
                    if !((actual - n.value).abs() <= allowed) {
                        failures.push(format!(
                            "`{}`: expected {} (rel_tol {}), got {actual}",
                            n.path, n.value, n.rel_tol
                        ));
                    }
                }
            },
            _ => {}
        }
    }
    failures
}

#[cfg(test)]
mod tests {
    use super::super::{bundled, bundled_names, NumericExpectation};
    use super::*;
    use crate::engine::{Backend, SharedEngine};
    use crate::protocol::McpServer;
    use crate::tools::Manager;

    fn client() -> (WireClient, tempfile::TempDir) {
        let dir = tempfile::tempdir().unwrap();
        let server = McpServer::new(Manager::with_engine(SharedEngine::mock(), dir.path()));
        (WireClient::connect(server).unwrap(), dir)
    }

    #[test]
    fn bundled_traces_pass() {
        for name in bundled_names() {
            let (mut c, _dir) = client();
            let report = replay(&bundled(name).unwrap(), &mut c).unwrap();
            assert!(report.passed, "{}", report.render());
        }
    }

    #[test]
    fn replays_are_reproducible() {
        let trace = bundled("shared-session").unwrap();
        let (mut a, _d1) = client();
        let (mut b, _d2) = client();
        let ra = replay(&trace, &mut a).unwrap();
        let rb = replay(&trace, &mut b).unwrap();
        assert_eq!(ra.without_timings(), rb.without_timings());
    }

    #[test]
    fn unknown_tool_halts_the_trace() {
        let trace = Trace::new(
            "bad",
            Backend::Mock,
            vec![
                TraceStep::agent("list_sources", json!({}), vec![]),
                TraceStep::agent("run_python", json!({"code": "1"}), vec![]),
                TraceStep::agent("list_sources", json!({}), vec![]),
            ],
        );
        let (mut c, _dir) = client();
        let report = replay(&trace, &mut c).unwrap();
        assert!(!report.passed);
        assert_eq!(report.steps.len(), 2);
        let failed = report.failed_step().unwrap();
        assert_eq!(failed.index, 1);
        assert!(failed.failures[0].contains("unknown tool"));
        assert!(report.render().contains("failed at step 1"));
    }

    #[test]
    fn expectation_failures_are_positioned() {
        let trace = Trace::new(
            "numeric",
            Backend::Mock,
            vec![
                TraceStep::agent("load_data", json!({"source": {"family": "radial"}}), vec![]),
                TraceStep::agent(
                    "create_isosurface",
                    json!({"value": 0.4}),
                    vec![Expectation::Numeric(NumericExpectation {
                        path: "area".into(),
                        value: 3.0,
                        rel_tol: 0.01,
                    })],
                ),
            ],
        );
        let (mut c, _dir) = client();
        let report = replay(&trace, &mut c).unwrap();
        let failed = report.failed_step().unwrap();
        assert_eq!(failed.index, 1);
        assert!(failed.failures[0].contains("expected 3"), "{:?}", failed.failures);
    }

    #[test]
    fn backend_must_match() {
        let (mut c, _dir) = client();
        let trace = Trace::new("pv", Backend::Paraview, vec![]);
        assert!(matches!(replay(&trace, &mut c), Err(HarnessError::BackendMismatch { .. })));
    }

    #[test]
    fn payload_paths() {
        let p = json!({"bins": [{"count": 3}], "range": [0.0, 1.5]});
        assert_eq!(lookup(&p, "bins.0.count"), Some(&json!(3)));
        assert_eq!(lookup(&p, "range.1"), Some(&json!(1.5)));
        assert_eq!(lookup(&p, "range.x"), None);
        assert_eq!(lookup(&p, "missing"), None);
    }

    #[test]
    fn errors_need_an_explicit_expectation() {
        let r = ToolResult::error("boom");
        assert_eq!(check_expectations(&[], &r).len(), 1);
        assert!(check_expectations(&[Expectation::IsError(true)], &r).is_empty());
        let ok = ToolResult::text("fine");
        assert_eq!(check_expectations(&[Expectation::HasImage(true)], &ok).len(), 1);
        assert_eq!(check_expectations(&[Expectation::TextContains("fin".into())], &ok), Vec::<String>::new());
    }
}
