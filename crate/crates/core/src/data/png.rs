//! 8-bit PNG previews for human inspection. Not a data format.

use std::path::Path;

use super::fcube::write_atomic;
use super::{DataError, ImageCube};

pub const PREVIEW_GAMMA: f64 = 2.2;

/// `round(255 · v^(1/2.2))`.
pub fn gamma_encode(v: f32) -> u8 {
    (255.0 * (v.clamp(0.0, 1.0) as f64).powf(1.0 / PREVIEW_GAMMA)).round() as u8
}

fn encode_png(
    width: usize,
    height: usize,
    color: png::ColorType,
    pixels: &[u8],
) -> Result<Vec<u8>, DataError> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(color);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc
            .write_header()
            .map_err(|e| DataError::Config(e.to_string()))?;
        writer
            .write_image_data(pixels)
            .map_err(|e| DataError::Config(e.to_string()))?;
    }
    Ok(out)
}

/// Gamma-encoded PNG bytes for a 1-band (gray) or 3-band (RGB) cube.
pub fn preview_bytes(cube: &ImageCube) -> Result<Vec<u8>, DataError> {
    let color = match cube.bands() {
        1 => png::ColorType::Grayscale,
        3 => png::ColorType::Rgb,
        c => {
            return Err(DataError::Shape(format!(
                "preview needs 1 or 3 bands, got {c}"
            )))
        }
    };
    let pixels: Vec<u8> = cube.data().iter().map(|&v| gamma_encode(v)).collect();
    encode_png(cube.width(), cube.height(), color, &pixels)
}

pub fn write_preview(cube: &ImageCube, path: impl AsRef<Path>) -> Result<(), DataError> {
    write_atomic(path.as_ref(), &preview_bytes(cube)?)
}

/// Linear gray rendering of a 1-band error map: 0 is black, `scale` and above white.
pub fn error_map_bytes(map: &ImageCube, scale: f32) -> Result<Vec<u8>, DataError> {
    if map.bands() != 1 {
        return Err(DataError::Shape(format!(
            "error map needs 1 band, got {}",
            map.bands()
        )));
    }
    if !(scale > 0.0) {
        return Err(DataError::Config(format!(
            "error scale must be positive, got {scale}"
        )));
    }
    let pixels: Vec<u8> = map
        .data()
        .iter()
        .map(|&e| (255.0 * (e / scale).min(1.0)).round() as u8)
        .collect();
    encode_png(
        map.width(),
        map.height(),
        png::ColorType::Grayscale,
        &pixels,
    )
}

pub fn write_error_map(
    map: &ImageCube,
    scale: f32,
    path: impl AsRef<Path>,
) -> Result<(), DataError> {
    write_atomic(path.as_ref(), &error_map_bytes(map, scale)?)
}
