//! Depth-based losses: motion, smoothness, geometric consistency and reference.

use super::LossResult;
use crate::error::{Error, Result};
use crate::geometry::{check_shape, DepthMap, DepthPair, Grid, ImageGrid, MaskMap};

/// Relative student/teacher disagreement at and above which a pixel counts as moving.
pub const MOTION_THRESHOLD: f64 = 0.6;

fn check_depths(a: &DepthMap, b: &DepthMap) -> Result<()> {
    check_shape(a.values(), b.values())
}

/// True (static) where `max((D − D̂)/D̂, (D̂ − D)/D) < threshold`.
///
/// Pixels where either map is invalid are reported static, so they never enter the
/// motion loss.
pub fn motion_mask(d: &DepthMap, d_teacher: &DepthMap, threshold: f64) -> Result<MaskMap> {
    check_depths(d, d_teacher)?;
    if !(threshold.is_finite() && threshold > 0.0) {
        return Err(Error::invalid(format!("motion threshold must be > 0, got {threshold}")));
    }
    Ok(Grid::from_fn(d.width(), d.height(), |u, v| {
        match (d.get(u, v), d_teacher.get(u, v)) {
            (Some(a), Some(b)) => ((a - b) / b).max((b - a) / a) < threshold,
            _ => true,
        }
    }))
}

/// `|D − D̂|` averaged over pixels where the motion mask is false.
pub fn motion_loss(d: &DepthMap, d_teacher: &DepthMap, m: &MaskMap) -> Result<LossResult> {
    check_depths(d, d_teacher)?;
    check_shape(d.values(), m)?;
    let raw = Grid::from_fn(d.width(), d.height(), |u, v| {
        match (d.get(u, v), d_teacher.get(u, v)) {
            (Some(a), Some(b)) => (a - b).abs(),
            _ => 0.0,
        }
    });
    let mask = Grid::from_fn(d.width(), d.height(), |u, v| {
        !m.get(u, v) && d.get(u, v).is_some() && d_teacher.get(u, v).is_some()
    });
    Ok(LossResult::masked(raw, mask))
}

/// Channel-mean absolute forward differences of the image along x and y; 0 on the
/// last column (x) and last row (y).
pub(crate) fn image_edges(img: &ImageGrid) -> (Grid<f64>, Grid<f64>) {
    let (w, h, ch) = (img.width(), img.height(), img.channels());
    let diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / ch as f64;
    let gx = Grid::from_fn(w, h, |u, v| {
        if u + 1 < w {
            diff(img.pixel(u + 1, v), img.pixel(u, v))
        } else {
            0.0
        }
    });
    let gy = Grid::from_fn(w, h, |u, v| {
        if v + 1 < h {
            diff(img.pixel(u, v + 1), img.pixel(u, v))
        } else {
            0.0
        }
    });
    (gx, gy)
}

/// Edge-aware smoothness of mean-normalized inverse depth.
///
/// Per pixel: `|∂x n|·e^{−|∂x I|} + |∂y n|·e^{−|∂y I|}` with forward differences and
/// `n = (1/D) / mean(1/D)`; the scalar is the mean over all pixels.
pub fn smoothness_loss(d: &DepthMap, i_t: &ImageGrid) -> Result<LossResult> {
    if !d.is_fully_valid() {
        return Err(Error::invalid("smoothness loss needs a dense depth map"));
    }
    if d.width() != i_t.width() || d.height() != i_t.height() {
        return Err(Error::shape(
            format!("{}x{}", d.width(), d.height()),
            format!("{}x{}", i_t.width(), i_t.height()),
        ));
    }
    let (w, h) = (d.width(), d.height());
    let inv: Vec<f64> = d.values().iter().map(|x| 1.0 / x).collect();
    let mean = inv.iter().sum::<f64>() / inv.len() as f64;
    let n: Vec<f64> = inv.iter().map(|x| x / mean).collect();
    let (gx, gy) = image_edges(i_t);
    let raw = Grid::from_fn(w, h, |u, v| {
        let i = v * w + u;
        let mut s = 0.0;
        if u + 1 < w {
            s += (n[i + 1] - n[i]).abs() * (-gx.get(u, v)).exp();
        }
        if v + 1 < h {
            s += (n[i + w] - n[i]).abs() * (-gy.get(u, v)).exp();
        }
        s
    });
    Ok(LossResult::masked(raw, Grid::filled(w, h, true)))
}

/// `1 − min(a, b) / max(a, b)` for positive depths.
#[inline]
pub fn geometric_error(a: f64, b: f64) -> f64 {
    1.0 - a.min(b) / a.max(b)
}

/// Partial derivatives of [`geometric_error`] with respect to `a` and `b` (off the tie).
#[inline]
pub(crate) fn geometric_error_grad(a: f64, b: f64) -> (f64, f64) {
    if a < b {
        // 1 − a/b
        (-1.0 / b, a / (b * b))
    } else {
        // 1 − b/a
        (b / (a * a), -1.0 / a)
    }
}

/// Geometric consistency of a depth pair, averaged over pixels valid in the pair and
/// kept by all three masks.
pub fn geometric_loss(
    pair: &DepthPair,
    m_motion: &MaskMap,
    m_auto: &MaskMap,
    m_cycle: &MaskMap,
) -> Result<LossResult> {
    let valid = &pair.valid;
    for m in [m_motion, m_auto, m_cycle] {
        check_shape(valid, m)?;
    }
    let (w, h) = (valid.width(), valid.height());
    let raw = Grid::from_fn(w, h, |u, v| {
        match (pair.computed.get(u, v), pair.interpolated.get(u, v)) {
            (Some(a), Some(b)) => geometric_error(a, b),
            _ => 0.0,
        }
    });
    let mask = Grid::from_fn(w, h, |u, v| {
        *valid.get(u, v) && *m_motion.get(u, v) && *m_auto.get(u, v) && *m_cycle.get(u, v)
    });
    Ok(LossResult::masked(raw, mask))
}

/// Mean `|D_t − D_ref|` over jointly valid pixels. Only `d_ref` is differentiated.
pub fn reference_loss(d_t: &DepthMap, d_ref: &DepthMap) -> Result<LossResult> {
    check_depths(d_t, d_ref)?;
    let (w, h) = (d_t.width(), d_t.height());
    let raw = Grid::from_fn(w, h, |u, v| match (d_t.get(u, v), d_ref.get(u, v)) {
        (Some(a), Some(b)) => (a - b).abs(),
        _ => 0.0,
    });
    let mask = Grid::from_fn(w, h, |u, v| d_t.get(u, v).is_some() && d_ref.get(u, v).is_some());
    Ok(LossResult::masked(raw, mask))
}
