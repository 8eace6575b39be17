//! Visualization pipeline engine contract.
//!
//! The [`Engine`] trait is the controllable substrate behind every tool. Two
//! backends implement it: [`MockEngine`], a deterministic in-process engine
//! over analytic scalar fields, and [`ParaViewEngine`], which forwards the
//! same operations to a `pvserver` session through a `pvpython` bridge.
//!
//! Engines are shared through [`SharedEngine`]. Every access goes through its
//! lock, so the agent session and any other client (for example a GUI user on
//! the same multi-client server) observe one serialized command stream.

mod field;
mod mock;
mod paraview;
mod render;
mod transfer;

use std::fmt;
use std::path::PathBuf;
use std::sync::Arc;

use parking_lot::{Mutex, MutexGuard};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

pub use field::{sphere_area, FieldFamily, FieldSpec, LATTICE};
pub use mock::MockEngine;
pub use paraview::{bridge_script, ParaViewEngine, ParaViewOptions};
pub use render::{RENDER_BANDS, RENDER_HEIGHT, RENDER_WIDTH};
pub use transfer::{
    validate_color_points, validate_opacity_points, within_range, ColorPoint, OpacityPoint,
    PointList, TransferFunction, RANGE_SLACK,
};

pub(crate) use field::fmt_num;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("unknown source '{0}'")]
    UnknownSource(String),
    #[error("not applicable: {0}")]
    NotApplicable(String),
    #[error("value {value} is out of range: it must lie strictly inside the scalar range [{}, {}]", fmt_num(*lo), fmt_num(*hi))]
    OutOfRange { value: f64, lo: f64, hi: f64 },
    #[error("cannot read dataset '{path}': {reason}")]
    CannotRead { path: String, reason: String },
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("{0}")]
    AreaUndefined(String),
    #[error("invalid {list} at index {index}: {reason}")]
    InvalidTransferFunction {
        list: PointList,
        index: usize,
        reason: String,
    },
    #[error("nothing to render")]
    NothingToRender,
    #[error("volume representation already exists for '{reader}' ({existing})")]
    VolumeExists { reader: String, existing: String },
    #[error("cannot delete '{id}': dependent sources {}", .dependents.join(", "))]
    HasDependents { id: String, dependents: Vec<String> },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("backend error: {0}")]
    Backend(String),
}

pub type EngineResult<T> = Result<T, EngineError>;

/// Opaque source identity, unique within a session and never reused.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SourceId(pub String);

impl SourceId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SourceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for SourceId {
    fn from(s: &str) -> Self {
        SourceId(s.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Reader,
    Contour,
    VolumeRepr,
}

impl SourceKind {
    pub const ALL: [SourceKind; 3] = [SourceKind::Reader, SourceKind::Contour, SourceKind::VolumeRepr];

    pub fn as_str(self) -> &'static str {
        match self {
            SourceKind::Reader => "reader",
            SourceKind::Contour => "contour",
            SourceKind::VolumeRepr => "volume_repr",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

impl fmt::Display for SourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One node of the visualization pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSource {
    pub id: SourceId,
    pub name: String,
    pub kind: SourceKind,
    pub params: Map<String, Value>,
    pub parent_id: Option<SourceId>,
    pub visible: bool,
}

impl PipelineSource {
    /// Contour isovalue, if this is a contour.
    pub fn contour_value(&self) -> Option<f64> {
        match self.kind {
            SourceKind::Contour => self.params.get("value").and_then(Value::as_f64),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SourceFilter {
    pub kind: Option<SourceKind>,
    pub name_contains: Option<String>,
}

impl SourceFilter {
    pub fn kind(kind: SourceKind) -> Self {
        SourceFilter {
            kind: Some(kind),
            name_contains: None,
        }
    }

    pub fn matches(&self, source: &PipelineSource) -> bool {
        self.kind.is_none_or(|k| k == source.kind)
            && self
                .name_contains
                .as_deref()
                .is_none_or(|n| source.name.contains(n))
    }
}

/// What to load: a dataset file or (mock only) an inline analytic field.
#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSpec {
    Path(PathBuf),
    Field(FieldSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: u64,
}

/// Mean composited color of one scalar band in a mock render.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandSample {
    pub lo: f64,
    pub hi: f64,
    pub r: f64,
    pub g: f64,
    pub b: f64,
    pub alpha: f64,
}

impl BandSample {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderCapture {
    pub width: u32,
    pub height: u32,
    pub png: Vec<u8>,
    pub band_report: Option<Vec<BandSample>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Camera {
    /// Degrees in [0, 360).
    pub azimuth: f64,
    /// Degrees in [-90, 90].
    pub elevation: f64,
}

impl Camera {
    pub fn orbit(&mut self, azimuth_deg: f64, elevation_deg: f64) {
        let az = (self.azimuth + azimuth_deg).rem_euclid(360.0);
        // rem_euclid can round up to exactly 360 for tiny negative inputs
        self.azimuth = if az >= 360.0 { 0.0 } else { az };
        self.elevation = (self.elevation + elevation_deg).clamp(-90.0, 90.0);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    Mock,
    Paraview,
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backend::Mock => "mock",
            Backend::Paraview => "paraview",
        })
    }
}

/// The pipeline operations every backend provides.
pub trait Engine: Send {
    fn backend(&self) -> Backend;

    fn load_dataset(&mut self, spec: &DatasetSpec) -> EngineResult<PipelineSource>;

    /// Sources matching `filter`, in creation order.
    fn list_sources(&mut self, filter: &SourceFilter) -> EngineResult<Vec<PipelineSource>>;

    fn source(&mut self, id: &SourceId) -> EngineResult<PipelineSource>;

    fn create_contour(&mut self, parent: &SourceId, value: f64) -> EngineResult<PipelineSource>;

    fn set_contour_value(&mut self, id: &SourceId, value: f64) -> EngineResult<PipelineSource>;

    fn surface_area(&mut self, id: &SourceId) -> EngineResult<f64>;

    /// Scalar range of the source's reader ancestor.
    fn scalar_range(&mut self, id: &SourceId) -> EngineResult<(f64, f64)>;

    fn histogram(&mut self, id: &SourceId, bins: usize) -> EngineResult<Vec<HistogramBin>>;

    fn enable_volume_rendering(&mut self, reader: &SourceId) -> EngineResult<PipelineSource>;

    fn transfer_function(&mut self, volume: &SourceId) -> EngineResult<TransferFunction>;

    /// Replaces the whole transfer function of a volume representation.
    fn set_transfer_function(&mut self, volume: &SourceId, tf: TransferFunction) -> EngineResult<()>;

    fn render(&mut self) -> EngineResult<RenderCapture>;

    fn camera(&mut self) -> EngineResult<Camera>;

    fn reset_camera(&mut self) -> EngineResult<()>;

    fn orbit(&mut self, azimuth_deg: f64, elevation_deg: f64) -> EngineResult<()>;

    fn delete_source(&mut self, id: &SourceId) -> EngineResult<()>;

    fn set_visibility(&mut self, id: &SourceId, visible: bool) -> EngineResult<()>;
}

/// A lock-serialized engine handle that several clients may hold.
#[derive(Clone)]
pub struct SharedEngine(Arc<Mutex<Box<dyn Engine>>>);

impl SharedEngine {
    pub fn new(engine: impl Engine + 'static) -> Self {
        SharedEngine(Arc::new(Mutex::new(Box::new(engine))))
    }

    pub fn mock() -> Self {
        Self::new(MockEngine::new())
    }

    pub fn lock(&self) -> MutexGuard<'_, Box<dyn Engine>> {
        self.0.lock()
    }
}

impl fmt::Debug for SharedEngine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SharedEngine").finish_non_exhaustive()
    }
}
