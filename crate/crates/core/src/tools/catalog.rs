//! The curated tool set: descriptors and handlers.

use std::fs;

use serde_json::{json, Map, Value};

use crate::engine::{
    fmt_num, ColorPoint, DatasetSpec, FieldSpec, OpacityPoint,
    PipelineSource, SourceFilter, SourceKind,
};

use super::schema::{Param, Schema};
use super::session::SessionContext;
use super::{RegisteredTool, ToolDescriptor, ToolError, ToolOutput};

pub const MAX_HISTOGRAM_BINS: i64 = 1024;

type Args = Map<String, Value>;

fn tool(
    name: &'static str,
    description: &'static str,
    params: Vec<Param>,
    returns: &'static str,
    handler: super::Handler,
) -> RegisteredTool {
    RegisteredTool {
        descriptor: ToolDescriptor {
            name,
            description,
            params,
            returns,
        },
        handler,
    }
}

fn field_spec_schema() -> Schema {
    Schema::Object(vec![
        Param::required(
            "family",
            Schema::choice(&["radial", "linear_x", "shells"]),
            "Analytic field family: radial = distance from center, linear_x = x coordinate, shells = periodic concentric shells.",
        ),
        Param::optional(
            "center",
            Schema::Tuple(vec![Schema::number(), Schema::number(), Schema::number()]),
            "Center point [x, y, z] for radial and shells fields. Defaults to [0.5, 0.5, 0.5].",
        ),
        Param::optional(
            "shell_period",
            Schema::Number {
                minimum: Some(1e-6),
                maximum: None,
                range_hint: None,
            },
            "Radial distance between successive shells (shells family only). Defaults to 0.25.",
        ),
    ])
}

fn unit() -> Schema {
    Schema::bounded(0.0, 1.0)
}

fn color_points_schema() -> Schema {
    Schema::Array {
        items: Box::new(Schema::Tuple(vec![Schema::number(), unit(), unit(), unit()])),
        min_items: 2,
        max_items: Some(256),
    }
}

fn opacity_points_schema() -> Schema {
    Schema::Array {
        items: Box::new(Schema::Tuple(vec![Schema::number(), unit()])),
        min_items: 2,
        max_items: Some(256),
    }
}

fn isovalue_schema() -> Schema {
    Schema::Number {
        minimum: None,
        maximum: None,
        range_hint: Some("exclusive scalar range of the active reader (see get_scalar_range)"),
    }
}

fn target_param(what: &'static str) -> Param {
    Param::required("target", Schema::string(), what)
}

pub(super) fn curated() -> Vec<RegisteredTool> {
    vec![
        tool(
            "load_data",
            "Load a dataset and make it the active source. Pass a file path, or (mock backend) an analytic field description. Use this first; every other tool works on loaded sources.",
            vec![Param::required(
                "source",
                Schema::OneOf(vec![Schema::string(), field_spec_schema()]),
                "Dataset file path, or an object {family, center?, shell_period?} describing an analytic field.",
            )],
            "Summary of the new reader (name, id, scalar range) and the full source listing.",
            load_data,
        ),
        tool(
            "list_sources",
            "List pipeline sources in creation order, optionally filtered by kind or name. The active source is marked with '*'. Use it to find what exists before selecting or modifying anything.",
            vec![
                Param::optional(
                    "kind",
                    Schema::choice(&["reader", "contour", "volume_repr"]),
                    "Only list sources of this kind.",
                ),
                Param::optional("name", Schema::string(), "Only list sources whose name contains this text."),
            ],
            "Source listing with ids, names, kinds, parameters and visibility.",
            list_sources,
        ),
        tool(
            "get_active_source",
            "Report the active source that source-specific tools operate on.",
            vec![],
            "The active source, or 'no active source'.",
            get_active_source,
        ),
        tool(
            "set_active_source",
            "Select the active source by exact id, exact name, or a unique case-insensitive part of its name.",
            vec![target_param("Source id, name, or unique name fragment.")],
            "The newly active source; an error listing all candidates when the name is ambiguous.",
            set_active_source,
        ),
        tool(
            "create_isosurface",
            "Extract an isosurface (contour) from the active reader at the given isovalue and make it active. The active source must be a reader.",
            vec![Param::required(
                "value",
                isovalue_schema(),
                "Isovalue; must lie strictly inside the reader's scalar range.",
            )],
            "The new contour and its surface area in squared domain units.",
            create_isosurface,
        ),
        tool(
            "update_isosurface",
            "Change the isovalue of the active contour. Use it to iterate toward a goal such as a target surface area.",
            vec![Param::required(
                "value",
                isovalue_schema(),
                "New isovalue; must lie strictly inside the parent reader's scalar range.",
            )],
            "The updated contour and its surface area.",
            update_isosurface,
        ),
        tool(
            "get_surface_area",
            "Measure the surface area of the active contour.",
            vec![],
            "Area in squared domain units.",
            get_surface_area,
        ),
        tool(
            "get_scalar_range",
            "Report the scalar range of the data behind the active source. Check it before choosing isovalues or color map control points.",
            vec![],
            "[min, max] of the scalar field.",
            get_scalar_range,
        ),
        tool(
            "get_histogram",
            "Histogram of the scalar values behind the active source, to assess the value distribution before designing a color map.",
            vec![Param::required(
                "bins",
                Schema::Integer {
                    minimum: Some(1),
                    maximum: Some(MAX_HISTOGRAM_BINS),
                },
                "Number of equal-width bins spanning the scalar range.",
            )],
            "List of {lo, hi, count} bins.",
            get_histogram,
        ),
        tool(
            "toggle_volume_rendering",
            "Turn volume rendering of the active reader on (creating a volume representation with a blue-to-red default transfer function) or toggle its visibility if it already exists.",
            vec![],
            "The volume representation and whether it is now visible.",
            toggle_volume_rendering,
        ),
        tool(
            "get_transfer_function",
            "Read the color and opacity control points of the active volume rendering.",
            vec![],
            "color_points [[scalar, r, g, b], ...] and opacity_points [[scalar, alpha], ...].",
            get_transfer_function,
        ),
        tool(
            "set_color_map",
            "Replace all color control points of the active volume rendering. Scalars must be strictly increasing and inside the scalar range; colors are RGB in [0, 1]. Opacity is unchanged.",
            vec![Param::required(
                "points",
                color_points_schema(),
                "Control points [[scalar, r, g, b], ...], at least two, scalars strictly increasing.",
            )],
            "The applied color points.",
            set_color_map,
        ),
        tool(
            "set_opacity_map",
            "Replace all opacity control points of the active volume rendering. Scalars must be strictly increasing and inside the scalar range; alpha in [0, 1]. Colors are unchanged.",
            vec![Param::required(
                "points",
                opacity_points_schema(),
                "Control points [[scalar, alpha], ...], at least two, scalars strictly increasing.",
            )],
            "The applied opacity points.",
            set_opacity_map,
        ),
        tool(
            "take_screenshot",
            "Render the current view and return it as a PNG image. Use it to check the visual result after changing the pipeline or color map.",
            vec![],
            "One PNG image item plus the saved file path (and, on the mock backend, the per-band color report).",
            take_screenshot,
        ),
        tool(
            "reset_camera",
            "Reset the camera to the default view.",
            vec![],
            "The camera state.",
            reset_camera,
        ),
        tool(
            "rotate_camera",
            "Orbit the camera around the focal point by the given angles in degrees.",
            vec![
                Param::required(
                    "azimuth",
                    Schema::bounded(-3600.0, 3600.0),
                    "Rotation about the view-up axis, degrees.",
                ),
                Param::required(
                    "elevation",
                    Schema::bounded(-3600.0, 3600.0),
                    "Rotation about the horizontal axis, degrees (result clamped to [-90, 90]).",
                ),
            ],
            "The camera state.",
            rotate_camera,
        ),
        tool(
            "set_visibility",
            "Show or hide a source.",
            vec![
                target_param("Source id, name, or unique name fragment."),
                Param::required("visible", Schema::Boolean, "true to show, false to hide."),
            ],
            "The source and its new visibility.",
            set_visibility,
        ),
        tool(
            "delete_source",
            "Delete a source. Sources that other sources depend on cannot be deleted; delete the dependents first.",
            vec![target_param("Source id, name, or unique name fragment.")],
            "Confirmation, noting when the active source was cleared.",
            delete_source,
        ),
    ]
}

fn number(args: &Args, key: &str) -> f64 {
    args.get(key).and_then(Value::as_f64).unwrap_or(f64::NAN)
}

fn text<'a>(args: &'a Args, key: &str) -> &'a str {
    args.get(key).and_then(Value::as_str).unwrap_or("")
}

fn source_json(source: &PipelineSource, ctx: &SessionContext) -> Value {
    let mut value = serde_json::to_value(source).unwrap_or(Value::Null);
    if let Value::Object(obj) = &mut value {
        obj.insert("active".into(), json!(ctx.active.as_ref() == Some(&source.id)));
    }
    value
}

fn source_line(source: &PipelineSource, ctx: &SessionContext) -> String {
    let marker = if ctx.active.as_ref() == Some(&source.id) { '*' } else { ' ' };
    let mut line = format!("{marker} {} ({}) [{}]", source.name, source.id, source.kind);
    if let Some(value) = source.contour_value() {
        line.push_str(&format!(" value={}", fmt_num(value)));
    }
    if let Some(Value::Array(range)) = source.params.get("scalar_range") {
        if let [Some(lo), Some(hi)] = [range[0].as_f64(), range[1].as_f64()] {
            line.push_str(&format!(" range [{}, {}]", fmt_num(lo), fmt_num(hi)));
        }
    }
    if !source.visible {
        line.push_str(" hidden");
    }
    line
}

fn listing(ctx: &SessionContext) -> Result<(String, Vec<Value>), ToolError> {
    let sources = ctx.engine.lock().list_sources(&SourceFilter::default())?;
    let lines: Vec<String> = sources.iter().map(|s| source_line(s, ctx)).collect();
    let json = sources.iter().map(|s| source_json(s, ctx)).collect();
    Ok((lines.join("\n"), json))
}

fn load_data(ctx: &mut SessionContext, args: &Args) -> Result<ToolOutput, ToolError> {
    let spec = match &args["source"] {
        Value::String(path) => DatasetSpec::Path(path.into()),
        other => DatasetSpec::Field(
            serde_json::from_value::<FieldSpec>(other.clone())
                .map_err(|e| ToolError::Usage(format!("invalid field description: {e}")))?,
        ),
    };
    let source = ctx.engine.lock().load_dataset(&spec)?;
    let (lo, hi) = ctx.engine.lock().scalar_range(&source.id)?;
    ctx.active = Some(source.id.clone());
    let (lines, sources) = listing(ctx)?;
    Ok(ToolOutput::new(format!(
        "loaded reader '{}' ({}), scalar range [{}, {}]; it is now the active source\n\nsources:\n{lines}",
        source.name,
        source.id,
        fmt_num(lo),
        fmt_num(hi)
    ))
    .payload(json!({
        "source": source_json(&source, ctx),
        "scalar_range": [lo, hi],
        "sources": sources,
    })))
}

fn list_sources(ctx: &mut SessionContext, args: &Args) -> Result<ToolOutput, ToolError> {
    let filter = SourceFilter {
        kind: args.get("kind").and_then(Value::as_str).and_then(SourceKind::parse),
        name_contains: args.get("name").and_then(Value::as_str).map(str::to_string),
    };
    let sources = ctx.engine.lock().list_sources(&filter)?;
    let text = if sources.is_empty() {
        if filter == SourceFilter::default() {
            "no sources loaded".to_string()
        } else {
            "no sources match the filter".to_string()
        }
    } else {
        sources
            .iter()
            .map(|s| source_line(s, ctx))
            .collect::<Vec<_>>()
            .join("\n")
    };
    Ok(ToolOutput::new(text).payload(json!({
        "active": ctx.active,
        "sources": sources.iter().map(|s| source_json(s, ctx)).collect::<Vec<_>>(),
    })))
}

fn get_active_source(ctx: &mut SessionContext, _: &Args) -> Result<ToolOutput, ToolError> {
    match ctx.active_source() {
        Ok(source) => Ok(ToolOutput::new(format!("active source: {}", source_line(&source, ctx).trim_start()))
            .payload(json!({"active": source_json(&source, ctx)}))),
        Err(ToolError::NoActiveSource) => {
            Ok(ToolOutput::new("no active source").payload(json!({"active": null})))
        }
        Err(e) => Err(e),
    }
}

fn set_active_source(ctx: &mut SessionContext, args: &Args) -> Result<ToolOutput, ToolError> {
    let source = ctx.resolve(text(args, "target"))?;
    ctx.active = Some(source.id.clone());
    Ok(ToolOutput::new(format!("active source is now '{}' ({})", source.name, source.id))
        .payload(json!({"active": source_json(&source, ctx)})))
}

fn area_summary(ctx: &SessionContext, source: &PipelineSource) -> (String, Value) {
    match ctx.engine.lock().surface_area(&source.id) {
        Ok(area) => (format!("surface area {}", fmt_num(area)), json!(area)),
        Err(e) => (format!("surface area unavailable: {e}"), Value::Null),
    }
}

fn create_isosurface(ctx: &mut SessionContext, args: &Args) -> Result<ToolOutput, ToolError> {
    let parent = ctx.active_source()?;
    let value = number(args, "value");
    let contour = ctx.engine.lock().create_contour(&parent.id, value)?;
    ctx.active = Some(contour.id.clone());
    let (area_text, area) = area_summary(ctx, &contour);
    Ok(ToolOutput::new(format!(
        "created isosurface '{}' ({}) of '{}' at value {}; {area_text}; it is now the active source",
        contour.name,
        contour.id,
        parent.name,
        fmt_num(value)
    ))
    .payload(json!({
        "source": source_json(&contour, ctx),
        "value": value,
        "area": area,
    })))
}

fn update_isosurface(ctx: &mut SessionContext, args: &Args) -> Result<ToolOutput, ToolError> {
    let active = ctx.active_source()?;
    let value = number(args, "value");
    let contour = ctx.engine.lock().set_contour_value(&active.id, value)?;
    let (area_text, area) = area_summary(ctx, &contour);
    Ok(ToolOutput::new(format!(
        "isosurface '{}' ({}) set to value {}; {area_text}",
        contour.name,
        contour.id,
        fmt_num(value)
    ))
    .payload(json!({
        "source": source_json(&contour, ctx),
        "value": value,
        "area": area,
    })))
}

fn get_surface_area(ctx: &mut SessionContext, _: &Args) -> Result<ToolOutput, ToolError> {
    let active = ctx.active_source()?;
    let area = ctx.engine.lock().surface_area(&active.id)?;
    Ok(ToolOutput::new(format!(
        "surface area of '{}' ({}) at value {}: {}",
        active.name,
        active.id,
        active.contour_value().map(fmt_num).unwrap_or_default(),
        fmt_num(area)
    ))
    .payload(json!({
        "id": active.id,
        "value": active.contour_value(),
        "area": area,
    })))
}

fn get_scalar_range(ctx: &mut SessionContext, _: &Args) -> Result<ToolOutput, ToolError> {
    let active = ctx.active_source()?;
    let (lo, hi) = ctx.engine.lock().scalar_range(&active.id)?;
    Ok(ToolOutput::new(format!(
        "scalar range of '{}': [{}, {}]",
        active.name,
        fmt_num(lo),
        fmt_num(hi)
    ))
    .payload(json!({"id": active.id, "scalar_range": [lo, hi]})))
}

fn get_histogram(ctx: &mut SessionContext, args: &Args) -> Result<ToolOutput, ToolError> {
    let active = ctx.active_source()?;
    let bins = args.get("bins").and_then(Value::as_f64).unwrap_or(0.0) as usize;
    let histogram = ctx.engine.lock().histogram(&active.id, bins)?;
    let total: u64 = histogram.iter().map(|b| b.count).sum();
    let lines: Vec<String> = histogram
        .iter()
        .map(|b| format!("[{}, {}]: {}", fmt_num(b.lo), fmt_num(b.hi), b.count))
        .collect();
    Ok(ToolOutput::new(format!(
        "histogram of '{}' ({} bins, {total} samples):\n{}",
        active.name,
        histogram.len(),
        lines.join("\n")
    ))
    .payload(json!({"id": active.id, "total": total, "bins": histogram})))
}

fn toggle_volume_rendering(ctx: &mut SessionContext, _: &Args) -> Result<ToolOutput, ToolError> {
    let active = ctx.active_source()?;
    let existing = if active.kind == SourceKind::Reader {
        ctx.volume_of(&active.id)?
    } else {
        None
    };
    let (volume, created) = match existing {
        Some(volume) => {
            ctx.engine.lock().set_visibility(&volume.id, !volume.visible)?;
            (ctx.engine.lock().source(&volume.id)?, false)
        }
        None => (ctx.engine.lock().enable_volume_rendering(&active.id)?, true),
    };
    let state = if volume.visible { "on" } else { "off" };
    let what = if created { "created" } else { "toggled" };
    Ok(ToolOutput::new(format!(
        "volume rendering of '{}' {what}: '{}' ({}) is {state}",
        active.name, volume.name, volume.id
    ))
    .payload(json!({"volume": source_json(&volume, ctx), "visible": volume.visible, "created": created})))
}

fn tf_payload(ctx: &SessionContext, volume: &PipelineSource) -> Result<Value, ToolError> {
    let tf = ctx.engine.lock().transfer_function(&volume.id)?;
    Ok(json!({
        "volume": volume.id,
        "color_points": tf.color_points.iter().map(|p| [p.scalar, p.rgb[0], p.rgb[1], p.rgb[2]]).collect::<Vec<_>>(),
        "opacity_points": tf.opacity_points.iter().map(|p| [p.scalar, p.alpha]).collect::<Vec<_>>(),
    }))
}

fn get_transfer_function(ctx: &mut SessionContext, _: &Args) -> Result<ToolOutput, ToolError> {
    let volume = ctx.active_volume()?;
    let payload = tf_payload(ctx, &volume)?;
    Ok(ToolOutput::new(format!("transfer function of '{}' ({})", volume.name, volume.id)).payload(payload))
}

fn point_rows(args: &Args) -> Vec<Vec<f64>> {
    args.get("points")
        .and_then(Value::as_array)
        .map(|rows| {
            rows.iter()
                .map(|row| {
                    row.as_array()
                        .map(|r| r.iter().map(|v| v.as_f64().unwrap_or(f64::NAN)).collect())
                        .unwrap_or_default()
                })
                .collect()
        })
        .unwrap_or_default()
}

fn set_color_map(ctx: &mut SessionContext, args: &Args) -> Result<ToolOutput, ToolError> {
    let volume = ctx.active_volume()?;
    let points: Vec<ColorPoint> = point_rows(args)
        .into_iter()
        .map(|r| ColorPoint::new(r[0], r[1], r[2], r[3]))
        .collect();
    {
        let mut engine = ctx.engine.lock();
        let mut tf = engine.transfer_function(&volume.id)?;
        tf.color_points = points;
        engine.set_transfer_function(&volume.id, tf)?;
    }
    let payload = tf_payload(ctx, &volume)?;
    Ok(ToolOutput::new(format!(
        "color map of '{}' replaced ({} points)",
        volume.name,
        payload["color_points"].as_array().map_or(0, Vec::len)
    ))
    .payload(payload))
}

fn set_opacity_map(ctx: &mut SessionContext, args: &Args) -> Result<ToolOutput, ToolError> {
    let volume = ctx.active_volume()?;
    let points: Vec<OpacityPoint> = point_rows(args)
        .into_iter()
        .map(|r| OpacityPoint::new(r[0], r[1]))
        .collect();
    {
        let mut engine = ctx.engine.lock();
        let mut tf = engine.transfer_function(&volume.id)?;
        tf.opacity_points = points;
        engine.set_transfer_function(&volume.id, tf)?;
    }
    let payload = tf_payload(ctx, &volume)?;
    Ok(ToolOutput::new(format!(
        "opacity map of '{}' replaced ({} points)",
        volume.name,
        payload["opacity_points"].as_array().map_or(0, Vec::len)
    ))
    .payload(payload))
}

fn take_screenshot(ctx: &mut SessionContext, _: &Args) -> Result<ToolOutput, ToolError> {
    let capture = ctx.engine.lock().render()?;
    let path = ctx.next_screenshot_path();
    fs::create_dir_all(&ctx.screenshot_dir)
        .and_then(|_| fs::write(&path, &capture.png))
        .map_err(|e| ToolError::Usage(format!("cannot write screenshot {}: {e}", path.display())))?;
    ctx.shots += 1;
    let mut text = format!(
        "screenshot {}x{} saved to {}",
        capture.width,
        capture.height,
        path.display()
    );
    if let Some(bands) = &capture.band_report {
        text.push_str("\nband report (scalar band: composited r g b, alpha):");
        for b in bands {
            text.push_str(&format!(
                "\n[{}, {}]: {:.3} {:.3} {:.3}, {:.3}",
                fmt_num(b.lo),
                fmt_num(b.hi),
                b.r,
                b.g,
                b.b,
                b.alpha
            ));
        }
    }
    Ok(ToolOutput::new(text)
        .payload(json!({
            "path": path.display().to_string(),
            "width": capture.width,
            "height": capture.height,
            "band_report": capture.band_report,
        }))
        .image(capture.png))
}

fn camera_output(ctx: &SessionContext, verb: &str) -> Result<ToolOutput, ToolError> {
    let camera = ctx.engine.lock().camera()?;
    Ok(ToolOutput::new(format!(
        "camera {verb}: azimuth {} deg, elevation {} deg",
        fmt_num(camera.azimuth),
        fmt_num(camera.elevation)
    ))
    .payload(json!({"camera": camera})))
}

fn reset_camera(ctx: &mut SessionContext, _: &Args) -> Result<ToolOutput, ToolError> {
    ctx.engine.lock().reset_camera()?;
    camera_output(ctx, "reset")
}

fn rotate_camera(ctx: &mut SessionContext, args: &Args) -> Result<ToolOutput, ToolError> {
    ctx.engine
        .lock()
        .orbit(number(args, "azimuth"), number(args, "elevation"))?;
    camera_output(ctx, "rotated")
}

fn set_visibility(ctx: &mut SessionContext, args: &Args) -> Result<ToolOutput, ToolError> {
    let source = ctx.resolve(text(args, "target"))?;
    let visible = args.get("visible").and_then(Value::as_bool).unwrap_or(true);
    ctx.engine.lock().set_visibility(&source.id, visible)?;
    Ok(ToolOutput::new(format!(
        "'{}' ({}) is now {}",
        source.name,
        source.id,
        if visible { "visible" } else { "hidden" }
    ))
    .payload(json!({"id": source.id, "visible": visible})))
}

fn delete_source(ctx: &mut SessionContext, args: &Args) -> Result<ToolOutput, ToolError> {
    let source = ctx.resolve(text(args, "target"))?;
    ctx.engine.lock().delete_source(&source.id)?;
    let cleared = ctx.active.as_ref() == Some(&source.id);
    if cleared {
        ctx.active = None;
    }
    let mut text = format!("deleted '{}' ({})", source.name, source.id);
    if cleared {
        text.push_str("; active source cleared");
    }
    Ok(ToolOutput::new(text).payload(json!({"deleted": source.id, "active_cleared": cleared})))
}
