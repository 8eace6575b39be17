//! Stripe renderer for the mock backend.
//!
//! The scalar range is split into [`RENDER_BANDS`] horizontal bands, lowest
//! scalars at the bottom. Each band is painted with the transfer function's
//! color at the band midpoint, composited over black with the opacity there.

use super::{BandSample, Camera, EngineError, RenderCapture, TransferFunction};

pub const RENDER_BANDS: usize = 8;
pub const RENDER_WIDTH: u32 = 128;
pub const RENDER_HEIGHT: u32 = 128;

const ROWS_PER_BAND: u32 = RENDER_HEIGHT / RENDER_BANDS as u32;

pub(super) fn band_report(tf: &TransferFunction, range: (f64, f64)) -> Vec<BandSample> {
    let (lo, hi) = range;
    let width = (hi - lo) / RENDER_BANDS as f64;
    (0..RENDER_BANDS)
        .map(|i| {
            let band_lo = lo + width * i as f64;
            let band_hi = if i + 1 == RENDER_BANDS {
                hi
            } else {
                lo + width * (i + 1) as f64
            };
            let mid = 0.5 * (band_lo + band_hi);
            let [r, g, b] = tf.color_at(mid);
            let alpha = tf.opacity_at(mid);
            BandSample {
                lo: band_lo,
                hi: band_hi,
                r: alpha * r,
                g: alpha * g,
                b: alpha * b,
                alpha,
            }
        })
        .collect()
}

/// Encodes the stripe image. `scene` and the camera are stamped into PNG
/// text chunks so that pipeline and view changes alter the bytes.
pub(super) fn render_stripes(
    bands: Vec<BandSample>,
    camera: &Camera,
    scene: &str,
) -> Result<RenderCapture, EngineError> {
    let mut pixels = Vec::with_capacity((RENDER_WIDTH * RENDER_HEIGHT * 3) as usize);
    for row in 0..RENDER_HEIGHT {
        let band = &bands[RENDER_BANDS - 1 - (row / ROWS_PER_BAND) as usize];
        let rgb = [to_u8(band.r), to_u8(band.g), to_u8(band.b)];
        for _ in 0..RENDER_WIDTH {
            pixels.extend_from_slice(&rgb);
        }
    }

    let mut png_bytes = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut png_bytes, RENDER_WIDTH, RENDER_HEIGHT);
        encoder.set_color(png::ColorType::Rgb);
        encoder.set_depth(png::BitDepth::Eight);
        let encode_err = |e: png::EncodingError| EngineError::Backend(format!("png encoding failed: {e}"));
        encoder
            .add_text_chunk(
                "vizbridge:camera".into(),
                format!("azimuth={} elevation={}", camera.azimuth, camera.elevation),
            )
            .map_err(encode_err)?;
        encoder
            .add_text_chunk("vizbridge:scene".into(), scene.to_string())
            .map_err(encode_err)?;
        let mut writer = encoder.write_header().map_err(encode_err)?;
        writer.write_image_data(&pixels).map_err(encode_err)?;
        writer.finish().map_err(encode_err)?;
    }

    Ok(RenderCapture {
        width: RENDER_WIDTH,
        height: RENDER_HEIGHT,
        png: png_bytes,
        band_report: Some(bands),
    })
}

fn to_u8(channel: f64) -> u8 {
    (channel.clamp(0.0, 1.0) * 255.0).round() as u8
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{ColorPoint, OpacityPoint};

    fn decode(png_bytes: &[u8]) -> (png::OutputInfo, Vec<u8>, Vec<(String, String)>) {
        let decoder = png::Decoder::new(png_bytes);
        let mut reader = decoder.read_info().unwrap();
        let mut buf = vec![0; reader.output_buffer_size()];
        let info = reader.next_frame(&mut buf).unwrap();
        buf.truncate(info.buffer_size());
        let texts = reader
            .info()
            .uncompressed_latin1_text
            .iter()
            .map(|t| (t.keyword.clone(), t.text.clone()))
            .collect();
        (info, buf, texts)
    }

    #[test]
    fn bands_partition_range_and_use_midpoints() {
        let range = (0.0, 0.8);
        let tf = TransferFunction::default_for_range(range);
        let bands = band_report(&tf, range);
        assert_eq!(bands.len(), RENDER_BANDS);
        assert_eq!(bands[0].lo, 0.0);
        assert_eq!(bands[7].hi, 0.8);
        for pair in bands.windows(2) {
            assert_eq!(pair[0].hi, pair[1].lo);
        }
        // first midpoint 0.05: opacity 0.0625, color blue/red mix 1/16
        assert!((bands[0].alpha - 0.0625).abs() < 1e-12);
        assert!((bands[0].r - 0.0625 * 0.0625).abs() < 1e-12);
        assert!((bands[0].b - 0.0625 * 0.9375).abs() < 1e-12);
    }

    #[test]
    fn decoded_image_has_declared_size_and_band_colors() {
        let tf = TransferFunction {
            color_points: vec![ColorPoint::new(0.0, 1.0, 0.0, 0.0), ColorPoint::new(1.0, 1.0, 0.0, 0.0)],
            opacity_points: vec![OpacityPoint::new(0.0, 1.0), OpacityPoint::new(1.0, 1.0)],
        };
        let capture = render_stripes(band_report(&tf, (0.0, 1.0)), &Camera::default(), "s").unwrap();
        let (info, buf, texts) = decode(&capture.png);
        assert_eq!((info.width, info.height), (capture.width, capture.height));
        assert_eq!(buf.len(), (capture.width * capture.height * 3) as usize);
        assert!(buf.chunks(3).all(|px| px == [255, 0, 0]));
        assert!(texts.iter().any(|(k, v)| k == "vizbridge:camera" && v.contains("azimuth=0")));
    }

    #[test]
    fn lowest_band_is_drawn_at_the_bottom() {
        let range = (0.0, 1.0);
        let tf = TransferFunction {
            color_points: vec![ColorPoint::new(0.0, 0.0, 0.0, 0.0), ColorPoint::new(1.0, 1.0, 1.0, 1.0)],
            opacity_points: vec![OpacityPoint::new(0.0, 1.0), OpacityPoint::new(1.0, 1.0)],
        };
        let capture = render_stripes(band_report(&tf, range), &Camera::default(), "").unwrap();
        let (_, buf, _) = decode(&capture.png);
        let top = buf[0];
        let bottom = buf[buf.len() - 3];
        assert!(top > bottom);
        assert_eq!(bottom, to_u8(0.0625));
    }
}
