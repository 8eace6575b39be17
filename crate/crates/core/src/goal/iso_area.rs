use serde_json::json;

use crate::tools::ToolSurface;

use super::{call, payload, scalar_range, GoalError, RefinementTrace, TraceIteration};

/// Number of evenly spaced values evaluated before bisection.
pub const SCAN_POINTS: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct AreaGoal {
    pub contour_id: String,
    /// Squared domain units.
    pub reference_area: f64,
    /// In (0, 1].
    pub target_fraction: f64,
    pub rel_tol: f64,
    /// Budget of area evaluations, scan included.
    pub max_iters: usize,
    /// Isovalue interval to search, `(lo, hi]`. Defaults to the contour's
    /// scalar range.
    pub search_range: Option<(f64, f64)>,
}

impl AreaGoal {
    pub fn new(contour_id: impl Into<String>, reference_area: f64, target_fraction: f64) -> Self {
        AreaGoal {
            contour_id: contour_id.into(),
            reference_area,
            target_fraction,
            rel_tol: 0.01,
            max_iters: 30,
            search_range: None,
        }
    }

    pub fn target(&self) -> f64 {
        self.target_fraction * self.reference_area
    }

    fn check(&self) -> Result<(), GoalError> {
        let fail = |m: &str| Err(GoalError::Precondition(m.to_string()));
        if !(self.reference_area.is_finite() && self.reference_area > 0.0) {
            return fail("reference_area must be positive");
        }
        if !(self.target_fraction > 0.0 && self.target_fraction <= 1.0) {
            return fail("target_fraction must lie in (0, 1]");
        }
        if !(self.rel_tol > 0.0) {
            return fail("rel_tol must be positive");
        }
        if self.max_iters == 0 {
            return fail("max_iters must be at least 1");
        }
        if let Some((lo, hi)) = self.search_range {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return fail("search_range must be a finite interval with lo < hi");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsoSolution {
    /// Best isovalue found; the contour is left at this value.
    pub value: f64,
    pub area: f64,
    pub trace: RefinementTrace,
}

struct Search<'a> {
    tools: &'a mut dyn ToolSurface,
    target: f64,
    trace: Vec<TraceIteration>,
    best: Option<(f64, f64, f64)>,
}

impl Search<'_> {
    /// Area at `value` via update_isosurface + get_surface_area; `None` where
    /// the area is undefined.
    fn evaluate(&mut self, value: f64, phase: &str) -> Result<Option<f64>, GoalError> {
        call(self.tools, "update_isosurface", json!({"value": value}))?;
        let result = self.tools.call_tool("get_surface_area", json!({}));
        let area = if result.is_error {
            None
        } else {
            payload(&result, "get_surface_area")?["area"].as_f64()
        };
        let error = area.map_or(f64::INFINITY, |a| (a - self.target).abs() / self.target);
        self.trace.push(TraceIteration {
            candidate: json!({"value": value, "phase": phase}),
            measurement: json!({"area": area}),
            error,
        });
        if let Some(a) = area {
            if self.best.is_none_or(|(_, _, e)| error < e) {
                self.best = Some((value, a, error));
            }
        }
        Ok(area)
    }
}

/// Finds the isovalue of `goal.contour_id` whose area is
/// `target_fraction * reference_area`. Scans [`SCAN_POINTS`] cell-centered
/// values of the search range, then bisects the first bracketing pair.
pub fn solve_iso_area(goal: &AreaGoal, tools: &mut dyn ToolSurface) -> Result<IsoSolution, GoalError> {
    goal.check()?;
    call(tools, "set_active_source", json!({"target": goal.contour_id}))?;
    let (lo, hi) = match goal.search_range {
        Some(range) => range,
        None => scalar_range(tools)?,
    };
    let mut search = Search {
        tools,
        target: goal.target(),
        trace: Vec::new(),
        best: None,
    };

    let width = hi - lo;
    let mut table: Vec<(f64, Option<f64>)> = Vec::with_capacity(SCAN_POINTS);
    let mut bracket = None;
    for i in 0..SCAN_POINTS {
        if search.trace.len() >= goal.max_iters {
            break;
        }
        let value = lo + width * (i as f64 + 0.5) / SCAN_POINTS as f64;
        let area = search.evaluate(value, "scan")?;
        if search.best.is_some_and(|(v, _, e)| v == value && e <= goal.rel_tol) {
            return finish(search, true);
        }
        if let (Some(&(prev_v, Some(prev_a))), Some(a)) = (table.last(), area) {
            if (prev_a - search.target) * (a - search.target) <= 0.0 {
                table.push((value, area));
                bracket = Some(((prev_v, prev_a), (value, a)));
                break;
            }
        }
        table.push((value, area));
    }

    let Some(((mut a_v, mut a_area), (mut b_v, mut b_area))) = bracket else {
        if search.trace.len() >= goal.max_iters {
            return finish(search, false);
        }
        return Err(GoalError::Unattainable {
            target: search.target,
            table,
        });
    };

    while search.trace.len() < goal.max_iters {
        let mid = 0.5 * (a_v + b_v);
        let Some(area) = search.evaluate(mid, "bisect")? else {
            return Err(GoalError::NonMonotone {
                lo: a_v,
                hi: b_v,
                value: mid,
                area: f64::NAN,
            });
        };
        let (low, high) = (a_area.min(b_area), a_area.max(b_area));
        let slack = 1e-12 * high.abs().max(1.0);
        if area < low - slack || area > high + slack {
            return Err(GoalError::NonMonotone {
                lo: a_v,
                hi: b_v,
                value: mid,
                area,
            });
        }
        if (area - search.target).abs() / search.target <= goal.rel_tol {
            return finish(search, true);
        }
        if (a_area - search.target) * (area - search.target) <= 0.0 {
            (b_v, b_area) = (mid, area);
        } else {
            (a_v, a_area) = (mid, area);
        }
    }
    finish(search, false)
}

fn finish(search: Search<'_>, converged: bool) -> Result<IsoSolution, GoalError> {
    let Some((value, area, _)) = search.best else {
        return Err(GoalError::Unattainable {
            target: search.target,
            table: Vec::new(),
        });
    };
    let last = search.trace.last().and_then(|it| it.candidate["value"].as_f64());
    if last != Some(value) {
        call(search.tools, "update_isosurface", json!({"value": value}))?;
    }
    Ok(IsoSolution {
        value,
        area,
        trace: RefinementTrace {
            iterations: search.trace,
            converged,
            final_candidate: json!({"value": value, "area": area}),
        },
    })
}

/// Bisection steps recorded in a trace.
pub fn bisection_steps(trace: &RefinementTrace) -> usize {
    trace
        .iterations
        .iter()
        .filter(|it| it.candidate["phase"] == "bisect")
        .count()
}
