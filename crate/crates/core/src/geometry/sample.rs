//! Bilinear sampling with conservative validity.
//!
//! A sample reads the (up to) four grid cells that carry non-zero weight. It is
//! invalid when any of them lies outside the grid or is flagged invalid. A
//! coordinate within [`SNAP_EPS`] of an integer is treated as that integer, so
//! reprojection round-off cannot push an on-grid sample off the last row/column.

use rayon::prelude::*;

use super::grid::{DepthMap, Grid, ImageGrid, MaskMap};

/// Distance to the nearest integer below which a coordinate snaps onto it.
pub const SNAP_EPS: f64 = 1e-9;

/// Per-pixel sampling location `(u, v)`, `None` where no location exists.
pub type CoordGrid = Grid<Option<(f64, f64)>>;

#[derive(Debug, Clone, Copy)]
struct Taps {
    index: [usize; 4],
    weight: [f64; 4],
    len: usize,
}

/// Snaps `x` onto the nearest integer within [`SNAP_EPS`] and returns its floor, or
/// `None` below 0 or above `max`. Integer conversions stand in for `round`/`floor`,
/// which are library calls on baseline x86-64.
#[inline]
fn snap_floor(x: f64, max: usize) -> Option<(f64, usize)> {
    if !(x > -0.5 && x < max as f64 + 0.5) {
        return None;
    }
    let nearest = (x + 0.5) as usize as f64;
    let x = if (x - nearest).abs() < SNAP_EPS { nearest } else { x };
    if x < 0.0 {
        return None;
    }
    let i = x as usize;
    if i > max {
        return None;
    }
    Some((x - i as f64, i))
}

/// Grid cells and weights for a bilinear read, or `None` when a needed cell is out of bounds.
#[inline]
fn taps(u: f64, v: f64, width: usize, height: usize) -> Option<Taps> {
    let (fu, u0) = snap_floor(u, width - 1)?;
    let (fv, v0) = snap_floor(v, height - 1)?;
    if (fu > 0.0 && u0 + 1 >= width) || (fv > 0.0 && v0 + 1 >= height) {
        return None;
    }
    let mut t = Taps {
        index: [0; 4],
        weight: [0.0; 4],
        len: 0,
    };
    let cols: &[(usize, f64)] = &[(u0, 1.0 - fu), (u0 + 1, fu)];
    let rows: &[(usize, f64)] = &[(v0, 1.0 - fv), (v0 + 1, fv)];
    let ncols = if fu > 0.0 { 2 } else { 1 };
    let nrows = if fv > 0.0 { 2 } else { 1 };
    for &(row, wr) in &rows[..nrows] {
        for &(col, wc) in &cols[..ncols] {
            t.index[t.len] = row * width + col;
            t.weight[t.len] = wr * wc;
            t.len += 1;
        }
    }
    Some(t)
}

/// Samples one depth value; `None` when out of bounds or touching an invalid cell.
pub fn sample_depth(depth: &DepthMap, u: f64, v: f64) -> Option<f64> {
    let t = taps(u, v, depth.width(), depth.height())?;
    let values = depth.values().as_slice();
    let valid = depth.valid().as_slice();
    let mut acc = 0.0;
    for i in 0..t.len {
        if !valid[t.index[i]] {
            return None;
        }
        acc += t.weight[i] * values[t.index[i]];
    }
    Some(acc)
}

/// Samples two same-shaped depth maps at one location; `None` unless both are valid there.
pub(crate) fn sample_depth_pair(a: &DepthMap, b: &DepthMap, u: f64, v: f64) -> Option<(f64, f64)> {
    let t = taps(u, v, a.width(), a.height())?;
    let (av, bv) = (a.values().as_slice(), b.values().as_slice());
    let (am, bm) = (a.valid().as_slice(), b.valid().as_slice());
    let (mut x, mut y) = (0.0, 0.0);
    for i in 0..t.len {
        let j = t.index[i];
        if !(am[j] && bm[j]) {
            return None;
        }
        x += t.weight[i] * av[j];
        y += t.weight[i] * bv[j];
    }
    Some((x, y))
}

/// Samples every channel of `img` into `out`; returns false when the sample is invalid.
/// `mask`, when given, flags which image cells may be read.
pub fn sample_image_into(
    img: &ImageGrid,
    mask: Option<&MaskMap>,
    u: f64,
    v: f64,
    out: &mut [f64],
) -> bool {
    let Some(t) = taps(u, v, img.width(), img.height()) else {
        return false;
    };
    if let Some(m) = mask {
        let m = m.as_slice();
        if (0..t.len).any(|i| !m[t.index[i]]) {
            return false;
        }
    }
    let ch = img.channels();
    let data = img.as_slice();
    for (c, o) in out.iter_mut().enumerate().take(ch) {
        let mut acc = 0.0;
        for i in 0..t.len {
            acc += t.weight[i] * data[t.index[i] * ch + c];
        }
        *o = acc.clamp(0.0, 1.0);
    }
    true
}

/// Bilinear value and partial derivatives `(value, ∂/∂u, ∂/∂v)` of a scalar field at a
/// non-integer location. Both neighbor columns and rows must be in bounds and readable.
pub(crate) fn bilinear_with_gradient(
    u: f64,
    v: f64,
    width: usize,
    height: usize,
    fetch: impl Fn(usize) -> Option<f64>,
) -> Option<(f64, f64, f64)> {
    if !(u.is_finite() && v.is_finite()) {
        return None;
    }
    let (u0, v0) = (u.floor(), v.floor());
    if u0 < 0.0 || v0 < 0.0 || u0 + 1.0 > (width - 1) as f64 || v0 + 1.0 > (height - 1) as f64 {
        return None;
    }
    let (fu, fv) = (u - u0, v - v0);
    let (u0, v0) = (u0 as usize, v0 as usize);
    let a = fetch(v0 * width + u0)?;
    let b = fetch(v0 * width + u0 + 1)?;
    let c = fetch((v0 + 1) * width + u0)?;
    let d = fetch((v0 + 1) * width + u0 + 1)?;
    let value = (1.0 - fv) * ((1.0 - fu) * a + fu * b) + fv * ((1.0 - fu) * c + fu * d);
    let du = (1.0 - fv) * (b - a) + fv * (d - c);
    let dv = (1.0 - fu) * (c - a) + fu * (d - b);
    Some((value, du, dv))
}

/// Grids that support bilinear resampling at arbitrary coordinates.
pub trait BilinearSample {
    type Sampled;

    /// Samples at every location of `coords`; the returned mask flags valid samples.
    fn bilinear_sample(&self, coords: &CoordGrid) -> (Self::Sampled, MaskMap);
}

impl BilinearSample for ImageGrid {
    type Sampled = ImageGrid;

    fn bilinear_sample(&self, coords: &CoordGrid) -> (ImageGrid, MaskMap) {
        sample_image_grid(self, None, coords)
    }
}

impl BilinearSample for DepthMap {
    type Sampled = DepthMap;

    fn bilinear_sample(&self, coords: &CoordGrid) -> (DepthMap, MaskMap) {
        let (w, h) = (coords.width(), coords.height());
        let samples: Vec<Option<f64>> = coords
            .as_slice()
            .par_iter()
            .map(|c| c.and_then(|(u, v)| sample_depth(self, u, v)))
            .collect();
        let valid = Grid::from_vec(w, h, samples.iter().map(Option::is_some).collect())
            .expect("shape matches coords");
        let values = samples.into_iter().map(|s| s.unwrap_or(0.0)).collect();
        let depth = DepthMap::new(Grid::from_vec(w, h, values).expect("shape"), valid.clone())
            .expect("bilinear samples of valid depth are positive");
        (depth, valid)
    }
}

/// Image resampling honoring an optional readability mask on the source.
pub(crate) fn sample_image_grid(
    img: &ImageGrid,
    mask: Option<&MaskMap>,
    coords: &CoordGrid,
) -> (ImageGrid, MaskMap) {
    let (w, h, ch) = (coords.width(), coords.height(), img.channels());
    let per_pixel: Vec<(bool, Vec<f64>)> = coords
        .as_slice()
        .par_iter()
        .map(|c| {
            let mut px = vec![0.0; ch];
            let ok = match c {
                Some((u, v)) => sample_image_into(img, mask, *u, *v, &mut px),
                None => false,
            };
            if !ok {
                px.iter_mut().for_each(|x| *x = 0.0);
            }
            (ok, px)
        })
        .collect();
    let valid = Grid::from_vec(w, h, per_pixel.iter().map(|(ok, _)| *ok).collect()).expect("shape");
    let data = per_pixel.into_iter().flat_map(|(_, px)| px).collect();
    let out = ImageGrid::new(w, h, ch, data).expect("samples are clamped to [0, 1]");
    (out, valid)
}
