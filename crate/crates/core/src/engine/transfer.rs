use serde::{Deserialize, Serialize};

use super::EngineError;

/// Relative slack (fraction of the range width) allowed when checking that
/// control points or bands lie inside a scalar range. Lets callers use
/// rounded range endpoints such as 0.87 for √3/2.
pub const RANGE_SLACK: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColorPoint {
    pub scalar: f64,
    pub rgb: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpacityPoint {
    pub scalar: f64,
    pub alpha: f64,
}

impl ColorPoint {
    pub fn new(scalar: f64, r: f64, g: f64, b: f64) -> Self {
        ColorPoint {
            scalar,
            rgb: [r, g, b],
        }
    }
}

impl OpacityPoint {
    pub fn new(scalar: f64, alpha: f64) -> Self {
        OpacityPoint { scalar, alpha }
    }
}

/// Piecewise-linear color and opacity maps over a scalar range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferFunction {
    pub color_points: Vec<ColorPoint>,
    pub opacity_points: Vec<OpacityPoint>,
}

/// Which list of a transfer function a validation failure refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointList {
    Color,
    Opacity,
}

impl std::fmt::Display for PointList {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PointList::Color => "color point",
            PointList::Opacity => "opacity point",
        })
    }
}

impl TransferFunction {
    /// Blue to red ramp with linear 0→1 opacity across `range`.
    pub fn default_for_range(range: (f64, f64)) -> Self {
        let (lo, hi) = range;
        TransferFunction {
            color_points: vec![
                ColorPoint::new(lo, 0.0, 0.0, 1.0),
                ColorPoint::new(hi, 1.0, 0.0, 0.0),
            ],
            opacity_points: vec![OpacityPoint::new(lo, 0.0), OpacityPoint::new(hi, 1.0)],
        }
    }

    pub fn color_at(&self, scalar: f64) -> [f64; 3] {
        let idx = segment(&self.color_points, |p| p.scalar, scalar);
        match idx {
            Segment::Before => self.color_points[0].rgb,
            Segment::After => self.color_points[self.color_points.len() - 1].rgb,
            Segment::Between(i, t) => {
                let a = self.color_points[i].rgb;
                let b = self.color_points[i + 1].rgb;
                [lerp(a[0], b[0], t), lerp(a[1], b[1], t), lerp(a[2], b[2], t)]
            }
        }
    }

    pub fn opacity_at(&self, scalar: f64) -> f64 {
        match segment(&self.opacity_points, |p| p.scalar, scalar) {
            Segment::Before => self.opacity_points[0].alpha,
            Segment::After => self.opacity_points[self.opacity_points.len() - 1].alpha,
            Segment::Between(i, t) => {
                lerp(self.opacity_points[i].alpha, self.opacity_points[i + 1].alpha, t)
            }
        }
    }

    /// Checks ordering, channel bounds and that every scalar lies in `range`.
    pub fn validate(&self, range: (f64, f64)) -> Result<(), EngineError> {
        validate_color_points(&self.color_points, range)?;
        validate_opacity_points(&self.opacity_points, range)
    }
}

pub fn validate_color_points(points: &[ColorPoint], range: (f64, f64)) -> Result<(), EngineError> {
    check_points(
        PointList::Color,
        points.iter().map(|p| (p.scalar, p.rgb.to_vec())),
        range,
    )
}

pub fn validate_opacity_points(
    points: &[OpacityPoint],
    range: (f64, f64),
) -> Result<(), EngineError> {
    check_points(
        PointList::Opacity,
        points.iter().map(|p| (p.scalar, vec![p.alpha])),
        range,
    )
}

/// True when `scalar` is within `range` widened by [`RANGE_SLACK`].
pub fn within_range(scalar: f64, range: (f64, f64)) -> bool {
    let slack = RANGE_SLACK * (range.1 - range.0).abs();
    scalar >= range.0 - slack && scalar <= range.1 + slack
}

fn check_points(
    list: PointList,
    points: impl ExactSizeIterator<Item = (f64, Vec<f64>)>,
    range: (f64, f64),
) -> Result<(), EngineError> {
    let invalid = |index: usize, reason: String| EngineError::InvalidTransferFunction {
        list,
        index,
        reason,
    };
    if points.len() < 2 {
        return Err(invalid(
            points.len().saturating_sub(1),
            format!("at least two {list}s are required, got {}", points.len()),
        ));
    }
    let mut prev: Option<f64> = None;
    for (index, (scalar, channels)) in points.enumerate() {
        if !scalar.is_finite() {
            return Err(invalid(index, "scalar is not finite".into()));
        }
        if let Some(p) = prev {
            if scalar <= p {
                return Err(invalid(
                    index,
                    format!("scalar {scalar} is not greater than previous {p}"),
                ));
            }
        }
        if !within_range(scalar, range) {
            return Err(invalid(
                index,
                format!(
                    "scalar {scalar} is outside the scalar range [{}, {}]",
                    super::field::fmt_num(range.0),
                    super::field::fmt_num(range.1)
                ),
            ));
        }
        if let Some(c) = channels
            .iter()
            .find(|c| !(c.is_finite() && (0.0..=1.0).contains(*c)))
        {
            return Err(invalid(index, format!("channel value {c} is outside [0, 1]")));
        }
        prev = Some(scalar);
    }
    Ok(())
}

enum Segment {
    Before,
    After,
    Between(usize, f64),
}

fn segment<P>(points: &[P], key: impl Fn(&P) -> f64, x: f64) -> Segment {
    if x <= key(&points[0]) {
        return Segment::Before;
    }
    let last = points.len() - 1;
    if x >= key(&points[last]) {
        return Segment::After;
    }
    // first point strictly greater than x; guaranteed in 1..=last
    let upper = points.partition_point(|p| key(p) <= x);
    let (a, b) = (key(&points[upper - 1]), key(&points[upper]));
    Segment::Between(upper - 1, (x - a) / (b - a))
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray() -> TransferFunction {
        TransferFunction {
            color_points: vec![ColorPoint::new(0.0, 0.0, 0.0, 0.0), ColorPoint::new(1.0, 1.0, 1.0, 1.0)],
            opacity_points: vec![OpacityPoint::new(0.0, 1.0), OpacityPoint::new(1.0, 1.0)],
        }
    }

    #[test]
    fn interpolates_linearly_and_clamps() {
        let tf = gray();
        assert_eq!(tf.color_at(0.25), [0.25, 0.25, 0.25]);
        assert_eq!(tf.color_at(-1.0), [0.0; 3]);
        assert_eq!(tf.color_at(2.0), [1.0; 3]);
        assert_eq!(tf.opacity_at(0.3), 1.0);
    }

    #[test]
    fn evaluates_exactly_at_interior_points() {
        let tf = TransferFunction {
            color_points: vec![
                ColorPoint::new(0.0, 0.0, 0.0, 1.0),
                ColorPoint::new(0.3, 0.55, 0.27, 0.07),
                ColorPoint::new(1.0, 1.0, 0.0, 0.0),
            ],
            ..gray()
        };
        assert_eq!(tf.color_at(0.3), [0.55, 0.27, 0.07]);
    }

    #[test]
    fn rejects_out_of_bounds_channel() {
        let mut tf = gray();
        tf.color_points[1].rgb[0] = 1.5;
        let err = tf.validate((0.0, 1.0)).unwrap_err();
        assert!(matches!(
            err,
            EngineError::InvalidTransferFunction { index: 1, list: PointList::Color, .. }
        ));
    }

    #[test]
    fn rejects_single_point_and_descending() {
        let mut tf = gray();
        tf.color_points.truncate(1);
        assert!(tf.validate((0.0, 1.0)).is_err());
        let mut tf = gray();
        tf.color_points[1].scalar = -0.5;
        let err = tf.validate((-1.0, 1.0)).unwrap_err();
        assert!(matches!(err, EngineError::InvalidTransferFunction { index: 1, .. }));
    }

    #[test]
    fn rounded_range_endpoint_is_accepted() {
        let range = (0.0, 3f64.sqrt() / 2.0);
        assert!(within_range(0.87, range));
        assert!(!within_range(0.9, range));
    }
}
