//! Pinhole camera model.
//!
//! Camera frame is right-handed: x right, y down, z forward. Pixel centers sit at
//! integer coordinates, so pixel `(u, v)` is the ray through `(u, v)` exactly.

use nalgebra::{Matrix3, Point3 as NPoint3, Vector3};

use crate::error::{Error, Result};

/// A 3D point in meters.
pub type Point3 = NPoint3<f64>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        if !(fx.is_finite() && fx > 0.0 && fy.is_finite() && fy > 0.0) {
            return Err(Error::invalid(format!(
                "focal lengths must be finite and > 0 (fx={fx}, fy={fy})"
            )));
        }
        if !(cx.is_finite() && cy.is_finite()) {
            return Err(Error::invalid(format!(
                "principal point must be finite (cx={cx}, cy={cy})"
            )));
        }
        Ok(Self { fx, fy, cx, cy })
    }

    /// Intrinsics with the principal point at the image center.
    pub fn centered(focal: f64, width: usize, height: usize) -> Result<Self> {
        Self::new(
            focal,
            focal,
            (width as f64 - 1.0) / 2.0,
            (height as f64 - 1.0) / 2.0,
        )
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    /// Intrinsics for an image downsampled by an integer `factor`, with pixel centers
    /// kept at integer coordinates of the coarse grid.
    pub fn downsampled(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::invalid("downsampling factor must be >= 1"));
        }
        let f = factor as f64;
        let shift = (f - 1.0) / 2.0;
        Self::new(
            self.fx / f,
            self.fy / f,
            (self.cx - shift) / f,
            (self.cy - shift) / f,
        )
    }

    /// Unit-depth ray `K⁻¹ (u, v, 1)` through a pixel.
    #[inline]
    pub fn ray(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }
}

/// Lifts pixel `(u, v)` at `depth` to a camera-frame point `K⁻¹ · depth · (u, v, 1)`.
///
/// The returned z equals `depth` exactly.
pub fn backproject(k: &Intrinsics, pixel: (f64, f64), depth: f64) -> Result<Point3> {
    let (u, v) = pixel;
    if !(depth.is_finite() && depth > 0.0) {
        return Err(Error::invalid(format!("depth must be finite and > 0, got {depth}")));
    }
    if !(u.is_finite() && v.is_finite()) {
        return Err(Error::invalid(format!("pixel ({u}, {v}) is not finite")));
    }
    Ok(backproject_unchecked(k, u, v, depth))
}

#[inline]
pub(crate) fn backproject_unchecked(k: &Intrinsics, u: f64, v: f64, depth: f64) -> Point3 {
    Point3::new((u - k.cx) / k.fx * depth, (v - k.cy) / k.fy * depth, depth)
}

/// Projects a camera-frame point to `((u, v), depth)`.
pub fn project(k: &Intrinsics, p: &Point3) -> Result<((f64, f64), f64)> {
    if !(p.z > 0.0) {
        return Err(Error::BehindCamera { z: p.z });
    }
    Ok((project_unchecked(k, p), p.z))
}

#[inline]
pub(crate) fn project_unchecked(k: &Intrinsics, p: &Point3) -> (f64, f64) {
    (k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy)
}
