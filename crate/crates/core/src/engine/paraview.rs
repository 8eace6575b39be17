//! ParaView backend.
//!
//! Operations are forwarded as JSON lines to a `pvpython` child running the
//! bundled bridge script, which is connected to a `pvserver` in multi-client
//! mode. The GUI client attached to the same server sees every change, and
//! changes it makes are picked up because nothing is cached on this side.
//!
//! Surface area is measured with ParaView's IntegrateVariables filter.

use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::process::{Child, Command, Stdio};

use serde::Deserialize;
use serde_json::{json, Value};

use super::{
    Backend, Camera, DatasetSpec, Engine, EngineError, EngineResult, HistogramBin,
    PipelineSource, RenderCapture, SourceFilter, SourceId, SourceKind, TransferFunction,
    RENDER_HEIGHT, RENDER_WIDTH,
};

const BRIDGE_SCRIPT: &str = include_str!("paraview_bridge.py");

/// Source of the pvpython bridge script.
pub fn bridge_script() -> &'static str {
    BRIDGE_SCRIPT
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParaViewOptions {
    /// `host:port` of the pvserver.
    pub pvserver_url: String,
    pub pvpython: PathBuf,
    pub screenshot_size: (u32, u32),
}

impl ParaViewOptions {
    pub fn new(pvserver_url: impl Into<String>) -> Self {
        ParaViewOptions {
            pvserver_url: pvserver_url.into(),
            pvpython: PathBuf::from("pvpython"),
            screenshot_size: (RENDER_WIDTH, RENDER_HEIGHT),
        }
    }

    pub fn host_port(&self) -> EngineResult<(String, u16)> {
        let url = self
            .pvserver_url
            .trim_start_matches("cs://")
            .trim_start_matches("tcp://");
        let (host, port) = url.rsplit_once(':').ok_or_else(|| {
            EngineError::InvalidArgument(format!(
                "pvserver url '{}' must have the form host:port",
                self.pvserver_url
            ))
        })?;
        let port = port.parse::<u16>().map_err(|_| {
            EngineError::InvalidArgument(format!("invalid pvserver port '{port}'"))
        })?;
        if host.is_empty() {
            return Err(EngineError::InvalidArgument("pvserver host is empty".into()));
        }
        Ok((host.to_string(), port))
    }
}

#[derive(Debug, Deserialize)]
struct Reply {
    ok: bool,
    #[serde(default)]
    result: Value,
    #[serde(default)]
    kind: String,
    #[serde(default)]
    error: String,
}

pub struct ParaViewEngine {
    reader: Box<dyn BufRead + Send>,
    writer: Box<dyn Write + Send>,
    child: Option<Child>,
    screenshot_size: (u32, u32),
    scratch: PathBuf,
    shots: u64,
}

impl ParaViewEngine {
    /// Spawns `pvpython` with the bridge script and connects to the pvserver.
    pub fn connect(options: &ParaViewOptions) -> EngineResult<Self> {
        let (host, port) = options.host_port()?;
        let scratch = std::env::temp_dir().join(format!("vizbridge-pv-{}", std::process::id()));
        std::fs::create_dir_all(&scratch)
            .map_err(|e| EngineError::Backend(format!("cannot create scratch dir: {e}")))?;
        let script = scratch.join("paraview_bridge.py");
        std::fs::write(&script, BRIDGE_SCRIPT)
            .map_err(|e| EngineError::Backend(format!("cannot write bridge script: {e}")))?;

        let mut child = Command::new(&options.pvpython)
            .arg(&script)
            .arg(&host)
            .arg(port.to_string())
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| {
                EngineError::Backend(format!(
                    "cannot launch '{}': {e}",
                    options.pvpython.display()
                ))
            })?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let mut engine = Self::with_streams(BufReader::new(stdout), stdin);
        engine.child = Some(child);
        engine.screenshot_size = options.screenshot_size;
        engine.scratch = scratch;
        // fail fast if the bridge could not connect
        engine.request(json!({"op": "camera"}))?;
        Ok(engine)
    }

    /// Drives an already running bridge over the given streams.
    pub fn with_streams(
        reader: impl BufRead + Send + 'static,
        writer: impl Write + Send + 'static,
    ) -> Self {
        ParaViewEngine {
            reader: Box::new(reader),
            writer: Box::new(writer),
            child: None,
            screenshot_size: (RENDER_WIDTH, RENDER_HEIGHT),
            scratch: std::env::temp_dir(),
            shots: 0,
        }
    }

    fn request(&mut self, command: Value) -> EngineResult<Value> {
        let io_err = |e: std::io::Error| EngineError::Backend(format!("bridge i/o: {e}"));
        let mut line = serde_json::to_string(&command)
            .map_err(|e| EngineError::Backend(e.to_string()))?;
        line.push('\n');
        self.writer.write_all(line.as_bytes()).map_err(io_err)?;
        self.writer.flush().map_err(io_err)?;

        let mut reply = String::new();
        if self.reader.read_line(&mut reply).map_err(io_err)? == 0 {
            return Err(EngineError::Backend("pvpython bridge closed its output".into()));
        }
        let reply: Reply = serde_json::from_str(reply.trim_end())
            .map_err(|e| EngineError::Backend(format!("malformed bridge reply: {e}")))?;
        if reply.ok {
            return Ok(reply.result);
        }
        Err(match reply.kind.as_str() {
            "unknown_source" => EngineError::UnknownSource(reply.error),
            "not_applicable" => EngineError::NotApplicable(reply.error),
            "cannot_read" => EngineError::CannotRead {
                path: String::new(),
                reason: reply.error,
            },
            "area_undefined" => EngineError::AreaUndefined(reply.error),
            "invalid_argument" => EngineError::InvalidArgument(reply.error),
            _ => EngineError::Backend(reply.error),
        })
    }

    fn decode<T: serde::de::DeserializeOwned>(value: Value) -> EngineResult<T> {
        serde_json::from_value(value)
            .map_err(|e| EngineError::Backend(format!("unexpected bridge result: {e}")))
    }

    fn all_sources(&mut self) -> EngineResult<Vec<PipelineSource>> {
        let value = self.request(json!({"op": "list"}))?;
        Self::decode(value)
    }

    fn require_kind(&mut self, id: &SourceId, kind: SourceKind, op: &str) -> EngineResult<PipelineSource> {
        let source = self.source(id)?;
        if source.kind != kind {
            return Err(EngineError::NotApplicable(format!(
                "{op} requires a {kind} source, but '{}' ({}) is a {}",
                source.name, source.id, source.kind
            )));
        }
        Ok(source)
    }

    fn check_open_range(&mut self, id: &SourceId, value: f64) -> EngineResult<()> {
        let (lo, hi) = self.scalar_range(id)?;
        if value.is_finite() && value > lo && value < hi {
            Ok(())
        } else {
            Err(EngineError::OutOfRange { value, lo, hi })
        }
    }
}

impl Drop for ParaViewEngine {
    fn drop(&mut self) {
        if let Some(child) = &mut self.child {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

impl Engine for ParaViewEngine {
    fn backend(&self) -> Backend {
        Backend::Paraview
    }

    fn load_dataset(&mut self, spec: &DatasetSpec) -> EngineResult<PipelineSource> {
        let path = match spec {
            DatasetSpec::Path(path) => path,
            DatasetSpec::Field(_) => {
                return Err(EngineError::NotApplicable(
                    "analytic field specs are only available on the mock backend".into(),
                ))
            }
        };
        let id: String = Self::decode(self.request(json!({"op": "load", "path": path}))?)
            .map_err(|_| EngineError::CannotRead {
                path: path.display().to_string(),
                reason: "bridge returned no source".into(),
            })?;
        self.source(&SourceId(id))
    }

    fn list_sources(&mut self, filter: &SourceFilter) -> EngineResult<Vec<PipelineSource>> {
        Ok(self
            .all_sources()?
            .into_iter()
            .filter(|s| filter.matches(s))
            .collect())
    }

    fn source(&mut self, id: &SourceId) -> EngineResult<PipelineSource> {
        self.all_sources()?
            .into_iter()
            .find(|s| &s.id == id)
            .ok_or_else(|| EngineError::UnknownSource(id.to_string()))
    }

    fn create_contour(&mut self, parent: &SourceId, value: f64) -> EngineResult<PipelineSource> {
        self.require_kind(parent, SourceKind::Reader, "create_contour")?;
        self.check_open_range(parent, value)?;
        let id: String = Self::decode(self.request(json!({"op": "contour", "parent": parent, "value": value}))?)?;
        self.source(&SourceId(id))
    }

    fn set_contour_value(&mut self, id: &SourceId, value: f64) -> EngineResult<PipelineSource> {
        self.require_kind(id, SourceKind::Contour, "set_contour_value")?;
        self.check_open_range(id, value)?;
        self.request(json!({"op": "set_contour", "id": id, "value": value}))?;
        self.source(id)
    }

    fn surface_area(&mut self, id: &SourceId) -> EngineResult<f64> {
        self.require_kind(id, SourceKind::Contour, "surface_area")?;
        Self::decode(self.request(json!({"op": "area", "id": id}))?)
    }

    fn scalar_range(&mut self, id: &SourceId) -> EngineResult<(f64, f64)> {
        let [lo, hi]: [f64; 2] = Self::decode(self.request(json!({"op": "range", "id": id}))?)?;
        Ok((lo, hi))
    }

    fn histogram(&mut self, id: &SourceId, bins: usize) -> EngineResult<Vec<HistogramBin>> {
        if bins == 0 {
            return Err(EngineError::InvalidArgument("bins must be at least 1".into()));
        }
        let (lo, hi) = self.scalar_range(id)?;
        let counts: Vec<u64> = Self::decode(self.request(json!({"op": "histogram", "id": id, "bins": bins}))?)?;
        let width = (hi - lo) / bins as f64;
        Ok(counts
            .into_iter()
            .enumerate()
            .map(|(i, count)| HistogramBin {
                lo: lo + width * i as f64,
                hi: if i + 1 == bins { hi } else { lo + width * (i + 1) as f64 },
                count,
            })
            .collect())
    }

    fn enable_volume_rendering(&mut self, reader: &SourceId) -> EngineResult<PipelineSource> {
        let source = self.require_kind(reader, SourceKind::Reader, "enable_volume_rendering")?;
        let existing = self
            .all_sources()?
            .into_iter()
            .find(|s| s.kind == SourceKind::VolumeRepr && s.parent_id.as_ref() == Some(reader));
        if let Some(existing) = existing {
            return Err(EngineError::VolumeExists {
                reader: source.name,
                existing: existing.id.to_string(),
            });
        }
        let id: String = Self::decode(self.request(json!({"op": "volume", "id": reader}))?)?;
        self.source(&SourceId(id))
    }

    fn transfer_function(&mut self, volume: &SourceId) -> EngineResult<TransferFunction> {
        self.require_kind(volume, SourceKind::VolumeRepr, "transfer_function")?;
        Self::decode(self.request(json!({"op": "get_tf", "id": volume}))?)
    }

    fn set_transfer_function(&mut self, volume: &SourceId, tf: TransferFunction) -> EngineResult<()> {
        self.require_kind(volume, SourceKind::VolumeRepr, "set_transfer_function")?;
        let range = self.scalar_range(volume)?;
        tf.validate(range)?;
        self.request(json!({"op": "set_tf", "id": volume, "tf": tf}))?;
        Ok(())
    }

    fn render(&mut self) -> EngineResult<RenderCapture> {
        if !self.all_sources()?.iter().any(|s| s.visible) {
            return Err(EngineError::NothingToRender);
        }
        self.shots += 1;
        let path = self.scratch.join(format!("render-{:06}.png", self.shots));
        let (width, height) = self.screenshot_size;
        self.request(json!({"op": "screenshot", "path": path, "width": width, "height": height}))?;
        let png = std::fs::read(&path)
            .map_err(|e| EngineError::Backend(format!("cannot read screenshot: {e}")))?;
        let _ = std::fs::remove_file(&path);
        let info = png::Decoder::new(png.as_slice())
            .read_info()
            .map_err(|e| EngineError::Backend(format!("screenshot is not a png: {e}")))?
            .info()
            .clone();
        Ok(RenderCapture {
            width: info.width,
            height: info.height,
            png,
            band_report: None,
        })
    }

    fn camera(&mut self) -> EngineResult<Camera> {
        Self::decode(self.request(json!({"op": "camera"}))?)
    }

    fn reset_camera(&mut self) -> EngineResult<()> {
        self.request(json!({"op": "reset_camera"}))?;
        Ok(())
    }

    fn orbit(&mut self, azimuth_deg: f64, elevation_deg: f64) -> EngineResult<()> {
        if !(azimuth_deg.is_finite() && elevation_deg.is_finite()) {
            return Err(EngineError::InvalidArgument("camera angles must be finite".into()));
        }
        self.request(json!({"op": "orbit", "azimuth": azimuth_deg, "elevation": elevation_deg}))?;
        Ok(())
    }

    fn delete_source(&mut self, id: &SourceId) -> EngineResult<()> {
        let all = self.all_sources()?;
        if !all.iter().any(|s| &s.id == id) {
            return Err(EngineError::UnknownSource(id.to_string()));
        }
        let dependents: Vec<String> = all
            .iter()
            .filter(|s| s.parent_id.as_ref() == Some(id))
            .map(|s| format!("{} ({})", s.name, s.id))
            .collect();
        if !dependents.is_empty() {
            return Err(EngineError::HasDependents {
                id: id.to_string(),
                dependents,
            });
        }
        self.request(json!({"op": "delete", "id": id}))?;
        Ok(())
    }

    fn set_visibility(&mut self, id: &SourceId, visible: bool) -> EngineResult<()> {
        self.source(id)?;
        self.request(json!({"op": "visibility", "id": id, "visible": visible}))?;
        Ok(())
    }
}
