//! PNG and PGM rasters.

use std::io::Cursor;
use std::path::Path;

use png::{BitDepth, ColorType, Transformations};

use super::{read_bytes, write_bytes};
use crate::error::{Error, Result};
use crate::geometry::{DepthMap, Grid, ImageGrid};

pub const PNG16_DEPTH_DIVISOR: f64 = 256.0;

fn fmt_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        offset: 0,
        message: message.into(),
    }
}

fn decode(path: &Path, transform: Transformations) -> Result<(png::OutputInfo, Vec<u8>)> {
    let bytes = read_bytes(path)?;
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(transform);
    let mut reader = decoder.read_info().map_err(|e| fmt_err(path, e.to_string()))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| fmt_err(path, "image too large"))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(|e| fmt_err(path, e.to_string()))?;
    buf.truncate(info.buffer_size());
    Ok((info, buf))
}

/// 16-bit grayscale depth, `raw / divisor` meters; raw 0 is invalid.
pub fn read_depth_png16(path: impl AsRef<Path>, divisor: f64) -> Result<DepthMap> {
    let path = path.as_ref();
    if !(divisor.is_finite() && divisor > 0.0) {
        return Err(Error::invalid(format!("depth divisor must be > 0, got {divisor}")));
    }
    let (info, buf) = decode(path, Transformations::IDENTITY)?;
    if info.color_type != ColorType::Grayscale || info.bit_depth != BitDepth::Sixteen {
        return Err(fmt_err(
            path,
            format!("expected 16-bit grayscale, found {:?} {:?}", info.color_type, info.bit_depth),
        ));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let values = buf
        .chunks_exact(2)
        .map(|b| match u16::from_be_bytes([b[0], b[1]]) {
            0 => 0.0,
            raw => raw as f64 / divisor,
        })
        .collect();
    DepthMap::from_values(w, h, values)
}

/// Any 8-bit (or palette / low bit depth) PNG as values in [0, 1]; alpha is dropped.
pub fn read_image_png(path: impl AsRef<Path>) -> Result<ImageGrid> {
    let path = path.as_ref();
    let (info, buf) = decode(path, Transformations::EXPAND)?;
    if info.bit_depth != BitDepth::Eight {
        return Err(fmt_err(path, format!("expected an 8-bit image, found {:?}", info.bit_depth)));
    }
    let (stride, keep) = match info.color_type {
        ColorType::Grayscale => (1, 1),
        ColorType::GrayscaleAlpha => (2, 1),
        ColorType::Rgb => (3, 3),
        ColorType::Rgba => (4, 3),
        other => return Err(fmt_err(path, format!("unsupported color type {other:?}"))),
    };
    let data = buf
        .chunks_exact(stride)
        .flat_map(|px| px[..keep].iter().map(|&b| b as f64 / 255.0))
        .collect();
    ImageGrid::new(info.width as usize, info.height as usize, keep, data)
}

fn to_u8(x: f64) -> u8 {
    (x.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes a 1- or 3-channel image as 8-bit PNG, clamping to [0, 1].
pub fn write_image_png(path: impl AsRef<Path>, img: &ImageGrid) -> Result<()> {
    let color = match img.channels() {
        1 => ColorType::Grayscale,
        3 => ColorType::Rgb,
        c => return Err(Error::invalid(format!("PNG output needs 1 or 3 channels, got {c}"))),
    };
    let data: Vec<u8> = img.as_slice().iter().map(|&x| to_u8(x)).collect();
    encode_png(path.as_ref(), img.width(), img.height(), color, BitDepth::Eight, &data)
}

/// Writes depth as 16-bit PNG with `round(d · divisor)`; invalid or out-of-range
/// depths become 0.
pub fn write_depth_png16(path: impl AsRef<Path>, depth: &DepthMap, divisor: f64) -> Result<()> {
    let mut data = Vec::with_capacity(depth.width() * depth.height() * 2);
    for (&d, &ok) in depth.values().iter().zip(depth.valid().iter()) {
        let raw = (d * divisor).round();
        let raw = if ok && raw >= 1.0 && raw <= u16::MAX as f64 { raw as u16 } else { 0 };
        data.extend_from_slice(&raw.to_be_bytes());
    }
    encode_png(path.as_ref(), depth.width(), depth.height(), ColorType::Grayscale, BitDepth::Sixteen, &data)
}

fn encode_png(path: &Path, w: usize, h: usize, color: ColorType, depth: BitDepth, data: &[u8]) -> Result<()> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, w as u32, h as u32);
        enc.set_color(color);
        enc.set_depth(depth);
        let mut writer = enc.write_header().map_err(|e| Error::invalid(e.to_string()))?;
        writer.write_image_data(data).map_err(|e| Error::invalid(e.to_string()))?;
    }
    write_bytes(path, &out)
}

/// Binary 8-bit PGM, mapping `[lo, hi]` linearly onto 0–255.
pub fn write_pgm(path: impl AsRef<Path>, map: &Grid<f64>, lo: f64, hi: f64) -> Result<()> {
    if !(lo.is_finite() && hi.is_finite() && hi > lo) {
        return Err(Error::invalid(format!("PGM range [{lo}, {hi}] is empty")));
    }
    let mut out = format!("P5\n{} {}\n255\n", map.width(), map.height()).into_bytes();
    out.extend(map.iter().map(|&x| to_u8((x - lo) / (hi - lo))));
    write_bytes(path.as_ref(), &out)
}
