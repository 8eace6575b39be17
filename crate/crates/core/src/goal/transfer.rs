use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::engine::{within_range, BandSample, ColorPoint, OpacityPoint, RenderCapture, TransferFunction};
use crate::protocol::ToolResult;
use crate::tools::ToolSurface;

use super::{call, payload, scalar_range, GoalError, RefinementTrace, TraceIteration};

/// Fraction of the remaining color error removed per update.
const STEP: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColorBand {
    pub lo: f64,
    pub hi: f64,
    pub rgb: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandColorGoal {
    pub bands: Vec<ColorBand>,
    /// Maximum per-channel deviation.
    pub color_tol: f64,
    /// Budget of render/measure rounds.
    pub max_iters: usize,
}

impl BandColorGoal {
    pub fn new(bands: Vec<ColorBand>) -> Self {
        BandColorGoal {
            bands,
            color_tol: 0.05,
            max_iters: 10,
        }
    }

    fn check(&self, range: (f64, f64)) -> Result<(), GoalError> {
        let fail = |m: String| Err(GoalError::Precondition(m));
        if self.bands.is_empty() {
            return fail("at least one goal band is required".into());
        }
        if !(self.color_tol > 0.0) || self.max_iters == 0 {
            return fail("color_tol must be positive and max_iters at least 1".into());
        }
        for b in &self.bands {
            if !(b.lo < b.hi) {
                return fail(format!("goal band [{}, {}] is empty", b.lo, b.hi));
            }
            if !within_range(b.lo, range) || !within_range(b.hi, range) {
                return fail(format!(
                    "goal band [{}, {}] lies outside the scalar range [{}, {}]",
                    b.lo, b.hi, range.0, range.1
                ));
            }
            if b.rgb.iter().any(|c| !(0.0..=1.0).contains(c)) {
                return fail(format!("goal band [{}, {}] has a color channel outside [0, 1]", b.lo, b.hi));
            }
        }
        let mut sorted: Vec<&ColorBand> = self.bands.iter().collect();
        sorted.sort_by(|a, b| a.lo.total_cmp(&b.lo));
        if let Some(w) = sorted.windows(2).find(|w| w[0].hi > w[1].lo) {
            return fail(format!(
                "goal bands [{}, {}] and [{}, {}] overlap",
                w[0].lo, w[0].hi, w[1].lo, w[1].hi
            ));
        }
        Ok(())
    }
}

/// Color measured for one rendered scalar band, straight (not premultiplied).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasuredBand {
    pub lo: f64,
    pub hi: f64,
    pub rgb: [f64; 3],
}

impl MeasuredBand {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

/// Render feedback: turns a capture into per-band colors. A vision-model
/// judge plugs in here.
pub trait Evaluator {
    fn measure(&mut self, capture: &RenderCapture) -> Result<Vec<MeasuredBand>, String>;
}

/// Reads the mock renderer's band report and removes the opacity
/// premultiplication.
#[derive(Debug, Clone, Copy, Default)]
pub struct BandReportEvaluator;

impl Evaluator for BandReportEvaluator {
    fn measure(&mut self, capture: &RenderCapture) -> Result<Vec<MeasuredBand>, String> {
        let report = capture
            .band_report
            .as_ref()
            .ok_or("the render carries no band report and no vision evaluator is configured")?;
        report
            .iter()
            .map(|b| {
                if b.alpha <= 0.0 {
                    return Err(format!(
                        "band [{:.4}, {:.4}] is fully transparent; its color cannot be measured",
                        b.lo, b.hi
                    ));
                }
                let straight = |c: f64| (c / b.alpha).clamp(0.0, 1.0);
                Ok(MeasuredBand {
                    lo: b.lo,
                    hi: b.hi,
                    rgb: [straight(b.r), straight(b.g), straight(b.b)],
                })
            })
            .collect()
    }
}

/// Rebuilds a [`RenderCapture`] from a `take_screenshot` result.
pub fn capture_from_result(result: &ToolResult) -> Result<RenderCapture, GoalError> {
    let png = result.images().into_iter().next().ok_or_else(|| GoalError::Tool {
        tool: "take_screenshot".into(),
        message: "result carries no image".into(),
    })?;
    let p = payload(result, "take_screenshot")?;
    let band_report = match p.get("band_report") {
        None | Some(Value::Null) => None,
        Some(v) => Some(serde_json::from_value::<Vec<BandSample>>(v.clone()).map_err(|e| GoalError::Tool {
            tool: "take_screenshot".into(),
            message: format!("malformed band report: {e}"),
        })?),
    };
    Ok(RenderCapture {
        width: p["width"].as_u64().unwrap_or(0) as u32,
        height: p["height"].as_u64().unwrap_or(0) as u32,
        png,
        band_report,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TfSolution {
    pub transfer_function: TransferFunction,
    pub trace: RefinementTrace,
}

fn read_tf(tools: &mut dyn ToolSurface) -> Result<TransferFunction, GoalError> {
    let p = payload(&call(tools, "get_transfer_function", json!({}))?, "get_transfer_function")?;
    let rows = |key: &str| -> Vec<Vec<f64>> {
        p[key]
            .as_array()
            .map(|rows| {
                rows.iter()
                    .map(|r| r.as_array().map(|r| r.iter().filter_map(Value::as_f64).collect()).unwrap_or_default())
                    .collect()
            })
            .unwrap_or_default()
    };
    let color_points: Vec<ColorPoint> = rows("color_points")
        .iter()
        .filter(|r| r.len() == 4)
        .map(|r| ColorPoint::new(r[0], r[1], r[2], r[3]))
        .collect();
    let opacity_points: Vec<OpacityPoint> = rows("opacity_points")
        .iter()
        .filter(|r| r.len() == 2)
        .map(|r| OpacityPoint::new(r[0], r[1]))
        .collect();
    if color_points.len() < 2 {
        return Err(GoalError::Tool {
            tool: "get_transfer_function".into(),
            message: "payload lacks color points".into(),
        });
    }
    Ok(TransferFunction {
        color_points,
        opacity_points,
    })
}

fn color_rows(points: &[ColorPoint]) -> Value {
    json!(points
        .iter()
        .map(|p| [p.scalar, p.rgb[0], p.rgb[1], p.rgb[2]])
        .collect::<Vec<_>>())
}

fn max_deviation(a: [f64; 3], b: [f64; 3]) -> f64 {
    (0..3).map(|i| (a[i] - b[i]).abs()).fold(0.0, f64::max)
}

/// Sets the color at `scalar`, replacing a point already there.
fn upsert(points: &mut Vec<ColorPoint>, scalar: f64, rgb: [f64; 3]) {
    let point = ColorPoint::new(scalar, rgb[0], rgb[1], rgb[2]);
    match points.iter().position(|p| (p.scalar - scalar).abs() <= 1e-12) {
        Some(i) => points[i] = point,
        None => {
            let at = points.partition_point(|p| p.scalar < scalar);
            points.insert(at, point);
        }
    }
}

/// Refines the active volume's color map until every rendered band inside
/// each goal band is within `color_tol` of its target color.
///
/// Each round renders, measures, and for every goal band out of tolerance
/// moves the color at each covered band midpoint halfway toward the
/// target. Covered midpoints of satisfied goal bands are pinned at their
/// measured color so they stay put.
pub fn refine_transfer_function(
    goal: &BandColorGoal,
    tools: &mut dyn ToolSurface,
    evaluator: &mut dyn Evaluator,
) -> Result<TfSolution, GoalError> {
    let range = scalar_range(tools)?;
    goal.check(range)?;
    let mut points = read_tf(tools)?.color_points;
    let mut iterations = Vec::new();
    let mut converged = false;

    for round in 0..goal.max_iters {
        let shot = call(tools, "take_screenshot", json!({}))?;
        let capture = capture_from_result(&shot)?;
        let measured = evaluator.measure(&capture).map_err(GoalError::NoFeedback)?;

        let mut per_goal = Vec::with_capacity(goal.bands.len());
        for band in &goal.bands {
            let covered: Vec<MeasuredBand> = measured
                .iter()
                .filter(|m| (band.lo..=band.hi).contains(&m.midpoint()))
                .copied()
                .collect();
            if covered.is_empty() {
                return Err(GoalError::Precondition(format!(
                    "goal band [{}, {}] contains no rendered band midpoint; widen it",
                    band.lo, band.hi
                )));
            }
            let error = covered.iter().map(|m| max_deviation(m.rgb, band.rgb)).fold(0.0, f64::max);
            per_goal.push((band, covered, error));
        }
        let error = per_goal.iter().map(|(_, _, e)| *e).fold(0.0, f64::max);
        iterations.push(TraceIteration {
            candidate: json!({"color_points": color_rows(&points)}),
            measurement: json!({"bands": per_goal
                .iter()
                .map(|(band, covered, e)| json!({"lo": band.lo, "hi": band.hi, "target": band.rgb, "measured": covered, "error": e}))
                .collect::<Vec<_>>()}),
            error,
        });
        log::debug!("tf refinement round {round}: error {error:.4}");
        if error <= goal.color_tol {
            converged = true;
            break;
        }
        if round + 1 == goal.max_iters {
            break;
        }
        for (band, covered, band_error) in &per_goal {
            for m in covered {
                let rgb = if *band_error > goal.color_tol {
                    [0, 1, 2].map(|i| (m.rgb[i] + STEP * (band.rgb[i] - m.rgb[i])).clamp(0.0, 1.0))
                } else {
                    m.rgb
                };
                upsert(&mut points, m.midpoint(), rgb);
            }
        }
        call(tools, "set_color_map", json!({"points": color_rows(&points)}))?;
    }

    let transfer_function = read_tf(tools)?;
    Ok(TfSolution {
        trace: RefinementTrace {
            iterations,
            converged,
            final_candidate: json!({"color_points": color_rows(&transfer_function.color_points)}),
        },
        transfer_function,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::SharedEngine;
    use crate::tools::Manager;
    use proptest::prelude::*;

    const BROWN: [f64; 3] = [0.55, 0.27, 0.07];
    const GREEN: [f64; 3] = [0.0, 0.8, 0.0];

    fn volume_session() -> (Manager, tempfile::TempDir) {
        let dir = tempfile::tempdir().unwrap();
        let mut m = Manager::with_engine(SharedEngine::mock(), dir.path());
        assert!(!m.call("load_data", &json!({"source": {"family": "radial"}})).is_error);
        assert!(!m.call("toggle_volume_rendering", &json!({})).is_error);
        (m, dir)
    }

    fn tree_goal() -> BandColorGoal {
        BandColorGoal::new(vec![
            ColorBand { lo: 0.0, hi: 0.3, rgb: BROWN },
            ColorBand { lo: 0.5, hi: 0.87, rgb: GREEN },
        ])
    }

    fn final_band_error(m: &mut Manager, goal: &BandColorGoal) -> f64 {
        let capture = capture_from_result(&m.call("take_screenshot", &json!({}))).unwrap();
        let measured = BandReportEvaluator.measure(&capture).unwrap();
        goal.bands
            .iter()
            .flat_map(|b| {
                measured
                    .iter()
                    .filter(|m| (b.lo..=b.hi).contains(&m.midpoint()))
                    .map(|m| max_deviation(m.rgb, b.rgb))
                    .collect::<Vec<_>>()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn converges_to_brown_base_and_green_tree() {
        let (mut m, _dir) = volume_session();
        let goal = tree_goal();
        let sol = refine_transfer_function(&goal, &mut m, &mut BandReportEvaluator).unwrap();
        assert!(sol.trace.converged);
        assert!(sol.trace.iterations.len() <= 10);
        assert!(sol.trace.iterations.last().unwrap().error <= 0.05);
        assert!(final_band_error(&mut m, &goal) <= 0.05);
        let best = sol.trace.best_so_far();
        assert!(best.windows(2).all(|w| w[1] <= w[0]));
        let errors: Vec<f64> = sol.trace.iterations.iter().map(|it| it.error).collect();
        for w in errors.windows(2) {
            assert!(w[1] <= 0.5 * w[0] + 1e-12 || w[1] <= goal.color_tol, "{errors:?}");
        }
    }

    #[test]
    fn satisfied_goal_returns_immediately() {
        let (mut m, _dir) = volume_session();
        let goal = tree_goal();
        refine_transfer_function(&goal, &mut m, &mut BandReportEvaluator).unwrap();
        let again = refine_transfer_function(&goal, &mut m, &mut BandReportEvaluator).unwrap();
        assert!(again.trace.converged);
        assert_eq!(again.trace.iterations.len(), 1);
    }

    #[test]
    fn preconditions() {
        let (mut m, _dir) = volume_session();
        let outside = BandColorGoal::new(vec![ColorBand { lo: 0.5, hi: 1.2, rgb: GREEN }]);
        assert!(matches!(
            refine_transfer_function(&outside, &mut m, &mut BandReportEvaluator),
            Err(GoalError::Precondition(_))
        ));
        let narrow = BandColorGoal::new(vec![ColorBand { lo: 0.0, hi: 0.01, rgb: GREEN }]);
        let err = refine_transfer_function(&narrow, &mut m, &mut BandReportEvaluator).unwrap_err();
        assert!(err.to_string().contains("no rendered band midpoint"), "{err}");
        let overlapping = BandColorGoal::new(vec![
            ColorBand { lo: 0.0, hi: 0.4, rgb: GREEN },
            ColorBand { lo: 0.3, hi: 0.6, rgb: BROWN },
        ]);
        assert!(refine_transfer_function(&overlapping, &mut m, &mut BandReportEvaluator)
            .unwrap_err()
            .to_string()
            .contains("overlap"));
    }

    #[test]
    fn missing_volume_is_a_tool_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = Manager::with_engine(SharedEngine::mock(), dir.path());
        m.call("load_data", &json!({"source": {"family": "radial"}}));
        let err = refine_transfer_function(&tree_goal(), &mut m, &mut BandReportEvaluator).unwrap_err();
        assert!(matches!(err, GoalError::Tool { ref tool, .. } if tool == "get_transfer_function"), "{err}");
    }

    struct Blind;

    impl Evaluator for Blind {
        fn measure(&mut self, capture: &RenderCapture) -> Result<Vec<MeasuredBand>, String> {
            BandReportEvaluator.measure(&RenderCapture {
                band_report: None,
                ..capture.clone()
            })
        }
    }

    #[test]
    fn no_band_report_means_no_feedback_channel() {
        let (mut m, _dir) = volume_session();
        let err = refine_transfer_function(&tree_goal(), &mut m, &mut Blind).unwrap_err();
        assert!(err.to_string().starts_with("no feedback channel"), "{err}");
    }

    #[test]
    fn transparent_bands_cannot_be_measured() {
        let (mut m, _dir) = volume_session();
        m.call("set_opacity_map", &json!({"points": [[0, 0], [0.866, 0]]}));
        let err = refine_transfer_function(&tree_goal(), &mut m, &mut BandReportEvaluator).unwrap_err();
        assert!(matches!(err, GoalError::NoFeedback(_)), "{err}");
    }

    fn rgb() -> impl Strategy<Value = [f64; 3]> {
        [0.0f64..=1.0, 0.0f64..=1.0, 0.0f64..=1.0]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn one_update_halves_every_band_error(low in rgb(), high in rgb(), start_lo in rgb(), start_hi in rgb()) {
            let (mut m, _dir) = volume_session();
            let ramp = json!({"points": [[0.0, start_lo[0], start_lo[1], start_lo[2]], [0.866, start_hi[0], start_hi[1], start_hi[2]]]});
            prop_assert!(!m.call("set_color_map", &ramp).is_error);
            let goal = BandColorGoal {
                color_tol: 1e-6,
                max_iters: 2,
                bands: vec![ColorBand { lo: 0.0, hi: 0.3, rgb: low }, ColorBand { lo: 0.5, hi: 0.87, rgb: high }],
            };
            let sol = refine_transfer_function(&goal, &mut m, &mut BandReportEvaluator).unwrap();
            let its = &sol.trace.iterations;
            if its.len() == 2 {
                for (before, after) in its[0].measurement["bands"].as_array().unwrap().iter()
                    .zip(its[1].measurement["bands"].as_array().unwrap())
                {
                    let (b, a) = (before["error"].as_f64().unwrap(), after["error"].as_f64().unwrap());
                    let pinned = b <= goal.color_tol && (a - b).abs() <= 1e-12;
                    prop_assert!(a <= 0.5 * b + 1e-9 || pinned, "before {b} after {a}");
                }
            } else {
                prop_assert!(sol.trace.converged);
            }
        }
    }
}
