//! Analytic scalar fields over the unit cube used by the mock backend.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::EngineError;

/// Samples per axis of the histogram lattice (cell-centered).
pub const LATTICE: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldFamily {
    /// Distance from `center`.
    Radial,
    /// The x coordinate.
    LinearX,
    /// Concentric shells: `0.5 - 0.5 cos(2π |p - center| / shell_period)`.
    Shells,
}

impl FieldFamily {
    pub fn as_str(self) -> &'static str {
        match self {
            FieldFamily::Radial => "radial",
            FieldFamily::LinearX => "linear_x",
            FieldFamily::Shells => "shells",
        }
    }
}

fn default_center() -> [f64; 3] {
    [0.5, 0.5, 0.5]
}

fn default_period() -> f64 {
    0.25
}

/// Declarative description of a mock dataset on the domain [0,1]³.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    pub family: FieldFamily,
    #[serde(default = "default_center")]
    pub center: [f64; 3],
    #[serde(default = "default_period")]
    pub shell_period: f64,
}

impl FieldSpec {
    pub fn radial() -> Self {
        Self::new(FieldFamily::Radial)
    }

    pub fn linear_x() -> Self {
        Self::new(FieldFamily::LinearX)
    }

    pub fn shells(period: f64) -> Self {
        FieldSpec {
            shell_period: period,
            ..Self::new(FieldFamily::Shells)
        }
    }

    pub fn new(family: FieldFamily) -> Self {
        FieldSpec {
            family,
            center: default_center(),
            shell_period: default_period(),
        }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if self.center.iter().any(|c| !c.is_finite()) {
            return Err(EngineError::InvalidDataset(
                "field center must be finite".into(),
            ));
        }
        if !(self.shell_period.is_finite() && self.shell_period > 0.0) {
            return Err(EngineError::InvalidDataset(format!(
                "shell_period must be a positive number, got {}",
                self.shell_period
            )));
        }
        Ok(())
    }

    /// Field value at a point.
    pub fn value(&self, p: [f64; 3]) -> f64 {
        match self.family {
            FieldFamily::Radial => distance(p, self.center),
            FieldFamily::LinearX => p[0],
            FieldFamily::Shells => shell_profile(distance(p, self.center), self.shell_period),
        }
    }

    /// Exact minimum and maximum of the field over the unit cube.
    pub fn scalar_range(&self) -> (f64, f64) {
        match self.family {
            FieldFamily::LinearX => (0.0, 1.0),
            FieldFamily::Radial => self.distance_range(),
            FieldFamily::Shells => {
                let (dmin, dmax) = self.distance_range();
                let period = self.shell_period;
                // The profile is periodic in the distance; its extremes over
                // [dmin, dmax] are either the global 0/1 (if a trough/crest is
                // crossed) or the endpoint values.
                let lo_end = shell_profile(dmin, period);
                let hi_end = shell_profile(dmax, period);
                let trough = (dmin / period).ceil() * period <= dmax;
                let crest = ((dmin / period - 0.5).ceil() + 0.5) * period <= dmax;
                let lo = if trough { 0.0 } else { lo_end.min(hi_end) };
                let hi = if crest { 1.0 } else { lo_end.max(hi_end) };
                (lo, hi)
            }
        }
    }

    /// Radius of the largest sphere around `center` that stays inside the
    /// cube; zero when the center is outside.
    pub fn inscribed_radius(&self) -> f64 {
        self.center
            .iter()
            .map(|&c| c.min(1.0 - c))
            .fold(f64::INFINITY, f64::min)
            .max(0.0)
    }

    /// Closed-form area of the level set at `value`.
    pub fn level_set_area(&self, value: f64) -> Result<f64, EngineError> {
        match self.family {
            FieldFamily::LinearX => {
                if value > 0.0 && value < 1.0 {
                    Ok(1.0)
                } else {
                    Err(EngineError::AreaUndefined(format!(
                        "no level set at {value} on linear_x"
                    )))
                }
            }
            FieldFamily::Radial => {
                if value <= 0.0 {
                    return Err(EngineError::AreaUndefined(format!(
                        "degenerate sphere at radius {value}"
                    )));
                }
                if value > self.inscribed_radius() {
                    return Err(EngineError::AreaUndefined(format!(
                        "area undefined for clipped regime: sphere of radius {value} exceeds the cube (max {})",
                        fmt_num(self.inscribed_radius())
                    )));
                }
                Ok(sphere_area(value))
            }
            FieldFamily::Shells => {
                if !(value > 0.0 && value < 1.0) {
                    return Err(EngineError::AreaUndefined(format!(
                        "no shell level set at {value}"
                    )));
                }
                let limit = self.inscribed_radius();
                Ok(self
                    .shell_radii(value, limit)
                    .into_iter()
                    .map(sphere_area)
                    .sum())
            }
        }
    }

    /// Radii (≤ `limit`) of the spheres forming the shells level set at `value`.
    pub fn shell_radii(&self, value: f64, limit: f64) -> Vec<f64> {
        let period = self.shell_period;
        // 0.5 - 0.5 cos(θ) = value  =>  θ = acos(1 - 2 value) ∈ (0, π)
        let phase = (1.0 - 2.0 * value).clamp(-1.0, 1.0).acos() / (2.0 * PI);
        let mut radii = Vec::new();
        let mut k = 0.0;
        loop {
            let a = (k + phase) * period;
            if a > limit {
                break;
            }
            radii.push(a);
            let b = (k + 1.0 - phase) * period;
            if b <= limit {
                radii.push(b);
            }
            k += 1.0;
        }
        radii
    }

    /// Field values on the 64³ cell-centered lattice, in x-fastest order.
    pub fn lattice_values(&self) -> impl Iterator<Item = f64> + '_ {
        let n = LATTICE;
        (0..n * n * n).map(move |idx| {
            let i = idx % n;
            let j = (idx / n) % n;
            let k = idx / (n * n);
            self.value([lattice_coord(i), lattice_coord(j), lattice_coord(k)])
        })
    }

    fn distance_range(&self) -> (f64, f64) {
        let c = self.center;
        let nearest = [c[0].clamp(0.0, 1.0), c[1].clamp(0.0, 1.0), c[2].clamp(0.0, 1.0)];
        let far = [
            if c[0] < 0.5 { 1.0 } else { 0.0 },
            if c[1] < 0.5 { 1.0 } else { 0.0 },
            if c[2] < 0.5 { 1.0 } else { 0.0 },
        ];
        (distance(c, nearest), distance(c, far))
    }
}

pub fn sphere_area(radius: f64) -> f64 {
    4.0 * PI * radius * radius
}

fn lattice_coord(i: usize) -> f64 {
    (i as f64 + 0.5) / LATTICE as f64
}

fn distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

fn shell_profile(d: f64, period: f64) -> f64 {
    0.5 - 0.5 * (2.0 * PI * d / period).cos()
}

pub(crate) fn fmt_num(x: f64) -> String {
    let s = format!("{x:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() || s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}
