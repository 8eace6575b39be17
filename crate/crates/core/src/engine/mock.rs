//! Deterministic in-process backend over analytic fields.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;

use serde_json::{json, Map, Value};

use super::render::{band_report, render_stripes};
use super::{
    fmt_num, Backend, Camera, DatasetSpec, Engine, EngineError, EngineResult, FieldSpec,
    HistogramBin, PipelineSource, RenderCapture, SourceFilter, SourceId, SourceKind,
    TransferFunction,
};

#[derive(Debug, Clone)]
struct Node {
    source: PipelineSource,
    field: Option<FieldSpec>,
    tf: Option<TransferFunction>,
}

/// Mock pipeline engine. Sources live in creation order; ids are `s1`, `s2`,
/// ... and never reused.
#[derive(Debug, Clone, Default)]
pub struct MockEngine {
    nodes: Vec<Node>,
    next_id: u64,
    name_counters: HashMap<String, u32>,
    camera: Camera,
}

impl MockEngine {
    pub fn new() -> Self {
        Self::default()
    }

    fn node(&self, id: &SourceId) -> EngineResult<&Node> {
        self.nodes
            .iter()
            .find(|n| &n.source.id == id)
            .ok_or_else(|| EngineError::UnknownSource(id.to_string()))
    }

    fn node_mut(&mut self, id: &SourceId) -> EngineResult<&mut Node> {
        self.nodes
            .iter_mut()
            .find(|n| &n.source.id == id)
            .ok_or_else(|| EngineError::UnknownSource(id.to_string()))
    }

    fn reader_field(&self, id: &SourceId) -> EngineResult<&FieldSpec> {
        let mut node = self.node(id)?;
        while let Some(parent) = &node.source.parent_id {
            node = self.node(parent)?;
        }
        node.field
            .as_ref()
            .ok_or_else(|| EngineError::Backend(format!("reader '{}' has no field", node.source.id)))
    }

    fn allocate(&mut self, base: &str) -> (SourceId, String) {
        self.next_id += 1;
        let counter = self.name_counters.entry(base.to_string()).or_insert(0);
        *counter += 1;
        (SourceId(format!("s{}", self.next_id)), format!("{base}-{counter}"))
    }

    fn push(
        &mut self,
        base: &str,
        kind: SourceKind,
        params: Map<String, Value>,
        parent_id: Option<SourceId>,
    ) -> SourceId {
        let (id, name) = self.allocate(base);
        self.nodes.push(Node {
            source: PipelineSource {
                id: id.clone(),
                name,
                kind,
                params,
                parent_id,
                visible: true,
            },
            field: None,
            tf: None,
        });
        id
    }

    fn require_kind(&self, id: &SourceId, kind: SourceKind, op: &str) -> EngineResult<&Node> {
        let node = self.node(id)?;
        if node.source.kind != kind {
            return Err(EngineError::NotApplicable(format!(
                "{op} requires a {kind} source, but '{}' ({}) is a {}",
                node.source.name, node.source.id, node.source.kind
            )));
        }
        Ok(node)
    }

    fn check_open_range(value: f64, range: (f64, f64)) -> EngineResult<()> {
        if value.is_finite() && value > range.0 && value < range.1 {
            Ok(())
        } else {
            Err(EngineError::OutOfRange {
                value,
                lo: range.0,
                hi: range.1,
            })
        }
    }

    fn scene_description(&self) -> String {
        let mut out = String::new();
        for node in self.nodes.iter().filter(|n| n.source.visible) {
            let s = &node.source;
            let _ = write!(out, "{} {} {} {};", s.id, s.kind, s.name, Value::Object(s.params.clone()));
        }
        out
    }

    fn load_field(&mut self, field: FieldSpec, base: String, extra: Map<String, Value>) -> EngineResult<PipelineSource> {
        field.validate()?;
        let (lo, hi) = field.scalar_range();
        let mut params = match serde_json::to_value(&field) {
            Ok(Value::Object(map)) => map,
            _ => Map::new(),
        };
        params.extend(extra);
        params.insert("scalar_range".into(), json!([lo, hi]));
        let id = self.push(&base, SourceKind::Reader, params, None);
        let node = self.node_mut(&id)?;
        node.field = Some(field);
        Ok(node.source.clone())
    }
}

impl Engine for MockEngine {
    fn backend(&self) -> Backend {
        Backend::Mock
    }

    fn load_dataset(&mut self, spec: &DatasetSpec) -> EngineResult<PipelineSource> {
        match spec {
            DatasetSpec::Field(field) => {
                let base = field.family.as_str().to_string();
                self.load_field(field.clone(), base, Map::new())
            }
            DatasetSpec::Path(path) => {
                let shown = path.display().to_string();
                let cannot_read = |reason: String| EngineError::CannotRead {
                    path: shown.clone(),
                    reason,
                };
                let text = fs::read_to_string(path).map_err(|e| cannot_read(e.to_string()))?;
                let field: FieldSpec = serde_json::from_str(&text)
                    .map_err(|e| cannot_read(format!("not a field description: {e}")))?;
                let base = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .filter(|s| !s.is_empty())
                    .unwrap_or_else(|| field.family.as_str().to_string());
                let mut extra = Map::new();
                extra.insert("path".into(), Value::String(shown.clone()));
                self.load_field(field, base, extra)
            }
        }
    }

    fn list_sources(&mut self, filter: &SourceFilter) -> EngineResult<Vec<PipelineSource>> {
        Ok(self
            .nodes
            .iter()
            .map(|n| &n.source)
            .filter(|s| filter.matches(s))
            .cloned()
            .collect())
    }

    fn source(&mut self, id: &SourceId) -> EngineResult<PipelineSource> {
        Ok(self.node(id)?.source.clone())
    }

    fn create_contour(&mut self, parent: &SourceId, value: f64) -> EngineResult<PipelineSource> {
        let field = self.require_kind(parent, SourceKind::Reader, "create_contour")?.field.clone();
        let range = field
            .map(|f| f.scalar_range())
            .ok_or_else(|| EngineError::Backend(format!("reader '{parent}' has no field")))?;
        Self::check_open_range(value, range)?;
        let mut params = Map::new();
        params.insert("value".into(), json!(value));
        let id = self.push("isosurface", SourceKind::Contour, params, Some(parent.clone()));
        self.source(&id)
    }

    fn set_contour_value(&mut self, id: &SourceId, value: f64) -> EngineResult<PipelineSource> {
        self.require_kind(id, SourceKind::Contour, "set_contour_value")?;
        let range = self.reader_field(id)?.scalar_range();
        Self::check_open_range(value, range)?;
        let node = self.node_mut(id)?;
        node.source.params.insert("value".into(), json!(value));
        Ok(node.source.clone())
    }

    fn surface_area(&mut self, id: &SourceId) -> EngineResult<f64> {
        let node = self.require_kind(id, SourceKind::Contour, "surface_area")?;
        let value = node
            .source
            .contour_value()
            .ok_or_else(|| EngineError::Backend(format!("contour '{id}' has no value")))?;
        self.reader_field(id)?.level_set_area(value)
    }

    fn scalar_range(&mut self, id: &SourceId) -> EngineResult<(f64, f64)> {
        Ok(self.reader_field(id)?.scalar_range())
    }

    fn histogram(&mut self, id: &SourceId, bins: usize) -> EngineResult<Vec<HistogramBin>> {
        if bins == 0 {
            return Err(EngineError::InvalidArgument("bins must be at least 1".into()));
        }
        let field = self.reader_field(id)?;
        let (lo, hi) = field.scalar_range();
        let width = hi - lo;
        let mut counts = vec![0u64; bins];
        for v in field.lattice_values() {
            let idx = if width > 0.0 {
                (((v - lo) / width) * bins as f64).floor() as isize
            } else {
                0
            };
            counts[idx.clamp(0, bins as isize - 1) as usize] += 1;
        }
        Ok(counts
            .into_iter()
            .enumerate()
            .map(|(i, count)| HistogramBin {
                lo: lo + width * i as f64 / bins as f64,
                hi: if i + 1 == bins {
                    hi
                } else {
                    lo + width * (i + 1) as f64 / bins as f64
                },
                count,
            })
            .collect())
    }

    fn enable_volume_rendering(&mut self, reader: &SourceId) -> EngineResult<PipelineSource> {
        let node = self.require_kind(reader, SourceKind::Reader, "enable_volume_rendering")?;
        let reader_name = node.source.name.clone();
        if let Some(existing) = self.nodes.iter().find(|n| {
            n.source.kind == SourceKind::VolumeRepr && n.source.parent_id.as_ref() == Some(reader)
        }) {
            return Err(EngineError::VolumeExists {
                reader: reader_name,
                existing: existing.source.id.to_string(),
            });
        }
        let range = self.reader_field(reader)?.scalar_range();
        let id = self.push("volume", SourceKind::VolumeRepr, Map::new(), Some(reader.clone()));
        let node = self.node_mut(&id)?;
        node.tf = Some(TransferFunction::default_for_range(range));
        Ok(node.source.clone())
    }

    fn transfer_function(&mut self, volume: &SourceId) -> EngineResult<TransferFunction> {
        let node = self.require_kind(volume, SourceKind::VolumeRepr, "transfer_function")?;
        node.tf
            .clone()
            .ok_or_else(|| EngineError::Backend(format!("volume '{volume}' has no transfer function")))
    }

    fn set_transfer_function(&mut self, volume: &SourceId, tf: TransferFunction) -> EngineResult<()> {
        self.require_kind(volume, SourceKind::VolumeRepr, "set_transfer_function")?;
        let range = self.reader_field(volume)?.scalar_range();
        tf.validate(range)?;
        self.node_mut(volume)?.tf = Some(tf);
        Ok(())
    }

    fn render(&mut self) -> EngineResult<RenderCapture> {
        let visible: Vec<&Node> = self.nodes.iter().filter(|n| n.source.visible).collect();
        let Some(last) = visible.last() else {
            return Err(EngineError::NothingToRender);
        };
        let (tf, range) = match visible
            .iter()
            .rev()
            .find(|n| n.source.kind == SourceKind::VolumeRepr)
        {
            Some(volume) => {
                let range = self.reader_field(&volume.source.id)?.scalar_range();
                let tf = volume
                    .tf
                    .clone()
                    .unwrap_or_else(|| TransferFunction::default_for_range(range));
                (tf, range)
            }
            None => {
                let range = self.reader_field(&last.source.id)?.scalar_range();
                (TransferFunction::default_for_range(range), range)
            }
        };
        log::debug!(
            "mock render over [{}, {}] with {} color points",
            fmt_num(range.0),
            fmt_num(range.1),
            tf.color_points.len()
        );
        render_stripes(band_report(&tf, range), &self.camera, &self.scene_description())
    }

    fn camera(&mut self) -> EngineResult<Camera> {
        Ok(self.camera)
    }

    fn reset_camera(&mut self) -> EngineResult<()> {
        self.camera = Camera::default();
        Ok(())
    }

    fn orbit(&mut self, azimuth_deg: f64, elevation_deg: f64) -> EngineResult<()> {
        if !(azimuth_deg.is_finite() && elevation_deg.is_finite()) {
            return Err(EngineError::InvalidArgument("camera angles must be finite".into()));
        }
        self.camera.orbit(azimuth_deg, elevation_deg);
        Ok(())
    }

    fn delete_source(&mut self, id: &SourceId) -> EngineResult<()> {
        self.node(id)?;
        let dependents: Vec<String> = self
            .nodes
            .iter()
            .filter(|n| n.source.parent_id.as_ref() == Some(id))
            .map(|n| format!("{} ({})", n.source.name, n.source.id))
            .collect();
        if !dependents.is_empty() {
            return Err(EngineError::HasDependents {
                id: id.to_string(),
                dependents,
            });
        }
        self.nodes.retain(|n| &n.source.id != id);
        Ok(())
    }

    fn set_visibility(&mut self, id: &SourceId, visible: bool) -> EngineResult<()> {
        self.node_mut(id)?.source.visible = visible;
        Ok(())
    }
}
