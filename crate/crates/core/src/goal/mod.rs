//! Closed-loop controllers that pursue a visualization objective through
//! the public tool surface only.
//!
//! [`solve_iso_area`] searches for the isovalue whose surface area is a given
//! fraction of a reference area (scan, then bisection). [`refine_transfer_function`]
//! repeatedly renders, measures per-band colors with an [`Evaluator`] and
//! moves color points halfway toward the targets. Both record every
//! evaluation in a [`RefinementTrace`].

mod iso_area;
mod transfer;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::protocol::ToolResult;
use crate::tools::ToolSurface;

pub use iso_area::{bisection_steps, solve_iso_area, AreaGoal, IsoSolution, SCAN_POINTS};
pub use transfer::{
    capture_from_result, refine_transfer_function, BandColorGoal, BandReportEvaluator, ColorBand, Evaluator,
    MeasuredBand, TfSolution,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GoalError {
    #[error("tool '{tool}' failed: {message}")]
    Tool { tool: String, message: String },
    #[error("target unattainable: area {} is not bracketed by any scanned pair\n{}", fmt_area(*target), scan_table(table))]
    Unattainable { target: f64, table: Vec<(f64, Option<f64>)> },
    #[error("area is not monotone between isovalues {lo} and {hi} (area {area} at {value} lies outside the bracket); explore manually with update_isosurface and get_surface_area")]
    NonMonotone { lo: f64, hi: f64, value: f64, area: f64 },
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("no feedback channel: {0}")]
    NoFeedback(String),
}

fn fmt_area(x: f64) -> String {
    format!("{x:.6}")
}

fn scan_table(table: &[(f64, Option<f64>)]) -> String {
    let mut out = String::from("value      area");
    for (value, area) in table {
        let area = area.map_or_else(|| "undefined".to_string(), fmt_area);
        out.push_str(&format!("\n{value:<10.6} {area}"));
    }
    out
}

/// One evaluation of a candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceIteration {
    pub candidate: Value,
    pub measurement: Value,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementTrace {
    pub iterations: Vec<TraceIteration>,
    pub converged: bool,
    #[serde(rename = "final")]
    pub final_candidate: Value,
}

impl RefinementTrace {
    /// Running minimum of the error, one entry per iteration.
    pub fn best_so_far(&self) -> Vec<f64> {
        self.iterations
            .iter()
            .scan(f64::INFINITY, |best, it| {
                *best = best.min(it.error);
                Some(*best)
            })
            .collect()
    }

    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).unwrap_or(Value::Null)
    }
}

/// Calls a tool and turns an error result into a [`GoalError`].
pub(crate) fn call(tools: &mut dyn ToolSurface, tool: &str, arguments: Value) -> Result<ToolResult, GoalError> {
    let result = tools.call_tool(tool, arguments);
    if result.is_error {
        let text = result.joined_text();
        return Err(GoalError::Tool {
            tool: tool.to_string(),
            message: text.strip_prefix("error: ").unwrap_or(&text).to_string(),
        });
    }
    Ok(result)
}

pub(crate) fn payload(result: &ToolResult, tool: &str) -> Result<Value, GoalError> {
    result.payload().ok_or_else(|| GoalError::Tool {
        tool: tool.to_string(),
        message: "result carries no structured payload".into(),
    })
}

pub(crate) fn scalar_range(tools: &mut dyn ToolSurface) -> Result<(f64, f64), GoalError> {
    let p = payload(&call(tools, "get_scalar_range", Value::Object(Default::default()))?, "get_scalar_range")?;
    match (p["scalar_range"][0].as_f64(), p["scalar_range"][1].as_f64()) {
        (Some(lo), Some(hi)) => Ok((lo, hi)),
        _ => Err(GoalError::Tool {
            tool: "get_scalar_range".into(),
            message: "payload lacks scalar_range".into(),
        }),
    }
}
