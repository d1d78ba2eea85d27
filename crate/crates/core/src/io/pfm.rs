//! Portable Float Map: `Pf` (one channel) or `PF` (three channels), a text header
//! `<tag>\n<width> <height>\n<scale>\n`, then float32 rows from bottom to top.
//! A negative scale means little-endian samples. Writers always emit little-endian
//! with scale −1.

use std::path::Path;

use super::{read_bytes, write_bytes};
use crate::error::{Error, Result};
use crate::geometry::{DepthMap, ImageGrid};

#[derive(Debug, Clone, PartialEq)]
pub struct PfmData {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    /// Row-major from the top row, channels interleaved.
    pub data: Vec<f32>,
}

fn fmt_err(path: &Path, offset: usize, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        offset: offset as u64,
        message: message.into(),
    }
}

/// Next whitespace-delimited header token, its offset, and the position after it.
fn token<'a>(bytes: &'a [u8], mut pos: usize, path: &Path, what: &str) -> Result<(&'a str, usize, usize)> {
    while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
        pos += 1;
    }
    let start = pos;
    while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
        pos += 1;
    }
    if start == pos {
        return Err(fmt_err(path, start, format!("missing {what}")));
    }
    let s = std::str::from_utf8(&bytes[start..pos]).map_err(|_| fmt_err(path, start, format!("{what} is not ASCII")))?;
    Ok((s, start, pos))
}

pub fn decode_pfm(bytes: &[u8], path: &Path) -> Result<PfmData> {
    let (tag, at, pos) = token(bytes, 0, path, "header tag")?;
    if at != 0 {
        return Err(fmt_err(path, 0, "file must start with Pf or PF"));
    }
    let channels = match tag {
        "Pf" => 1,
        "PF" => 3,
        other => return Err(fmt_err(path, 0, format!("unknown tag '{other}', expected Pf or PF"))),
    };
    let dim = |pos: usize, what: &str| -> Result<(usize, usize)> {
        let (s, at, end) = token(bytes, pos, path, what)?;
        match s.parse::<usize>() {
            Ok(n) if n > 0 => Ok((n, end)),
            _ => Err(fmt_err(path, at, format!("{what} '{s}' is not a positive integer"))),
        }
    };
    let (width, pos) = dim(pos, "width")?;
    let (height, pos) = dim(pos, "height")?;
    let (s, at, pos) = token(bytes, pos, path, "scale")?;
    let scale: f64 = s
        .parse()
        .ok()
        .filter(|x: &f64| x.is_finite() && *x != 0.0)
        .ok_or_else(|| fmt_err(path, at, format!("scale '{s}' is not a non-zero number")))?;
    // Exactly one whitespace byte separates the header from the payload.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(fmt_err(path, pos, "missing newline after scale"));
    }
    let start = pos + 1;
    let n = width
        .checked_mul(height)
        .and_then(|x| x.checked_mul(channels))
        .ok_or_else(|| fmt_err(path, at, "dimensions overflow"))?;
    let need = n * 4;
    if bytes.len() - start < need {
        return Err(fmt_err(
            path,
            bytes.len(),
            format!("truncated payload: expected {need} bytes after offset {start}, found {}", bytes.len() - start),
        ));
    }
    if bytes.len() - start > need {
        return Err(fmt_err(path, start + need, "trailing bytes after payload"));
    }
    let little = scale < 0.0;
    let row_len = width * channels;
    let mut data = vec![0f32; n];
    for (i, chunk) in bytes[start..].chunks_exact(4).enumerate() {
        let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let x = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        // Stored bottom row first.
        let (row, col) = (i / row_len, i % row_len);
        data[(height - 1 - row) * row_len + col] = x;
    }
    Ok(PfmData {
        width,
        height,
        channels,
        data,
    })
}

pub fn encode_pfm(pfm: &PfmData) -> Result<Vec<u8>> {
    let tag = match pfm.channels {
        1 => "Pf",
        3 => "PF",
        c => return Err(Error::invalid(format!("PFM holds 1 or 3 channels, got {c}"))),
    };
    let row_len = pfm.width * pfm.channels;
    if pfm.width == 0 || pfm.height == 0 || pfm.data.len() != row_len * pfm.height {
        return Err(Error::invalid("PFM dimensions do not match the payload"));
    }
    let mut out = format!("{tag}\n{} {}\n-1.0\n", pfm.width, pfm.height).into_bytes();
    out.reserve(pfm.data.len() * 4);
    for row in pfm.data.chunks_exact(row_len).rev() {
        for x in row {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn read_pfm(path: impl AsRef<Path>) -> Result<PfmData> {
    let path = path.as_ref();
    decode_pfm(&read_bytes(path)?, path)
}

pub fn write_pfm(path: impl AsRef<Path>, pfm: &PfmData) -> Result<()> {
    write_bytes(path.as_ref(), &encode_pfm(pfm)?)
}

/// Reads a single-channel PFM as depth; NaN and non-positive samples are invalid.
pub fn read_pfm_depth(path: impl AsRef<Path>) -> Result<DepthMap> {
    let path = path.as_ref();
    let pfm = read_pfm(path)?;
    if pfm.channels != 1 {
        return Err(fmt_err(path, 0, "depth must be a single-channel Pf file, found PF"));
    }
    DepthMap::from_values(pfm.width, pfm.height, pfm.data.iter().map(|&x| x as f64).collect())
}

/// Writes depth as float32; invalid pixels are stored as 0.
pub fn write_pfm_depth(path: impl AsRef<Path>, depth: &DepthMap) -> Result<()> {
    write_pfm(
        path,
        &PfmData {
            width: depth.width(),
            height: depth.height(),
            channels: 1,
            data: depth.values().iter().map(|&x| x as f32).collect(),
        },
    )
}

pub fn read_pfm_image(path: impl AsRef<Path>) -> Result<ImageGrid> {
    let pfm = read_pfm(path)?;
    ImageGrid::new(pfm.width, pfm.height, pfm.channels, pfm.data.iter().map(|&x| x as f64).collect())
}

pub fn write_pfm_image(path: impl AsRef<Path>, img: &ImageGrid) -> Result<()> {
    write_pfm(
        path,
        &PfmData {
            width: img.width(),
            height: img.height(),
            channels: img.channels(),
            data: img.as_slice().iter().map(|&x| x as f32).collect(),
        },
    )
}
