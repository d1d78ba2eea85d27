//! Rigid SE(3) transforms.
//!
//! A pose named `a_to_b` maps points expressed in frame `a` into frame `b`.
//! Camera poses loaded from disk are camera-to-world.

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};

use super::camera::Point3;
use crate::error::{Error, Result};

/// Tolerance on `RᵀR = I` and `det R = 1` for a rotation to be accepted.
pub const ROTATION_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a pose, rejecting rotations that are not orthonormal with det +1
    /// within [`ROTATION_TOLERANCE`].
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let err = rotation_error(&rotation);
        if !(err <= ROTATION_TOLERANCE) {
            return Err(Error::invalid(format!(
                "rotation is not orthonormal (deviation {err:.3e})"
            )));
        }
        if !translation.iter().all(|t| t.is_finite()) {
            return Err(Error::invalid("translation is not finite"));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: t,
        }
    }

    /// Rotation by `angle` radians about `axis` (right-hand rule), followed by `translation`.
    pub fn from_axis_angle(axis: Vector3<f64>, angle: f64, translation: Vector3<f64>) -> Self {
        let rotation = if axis.norm() == 0.0 || angle == 0.0 {
            Matrix3::identity()
        } else {
            Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle).into_inner()
        };
        Self {
            rotation,
            translation,
        }
    }

    /// Rotation about the camera y axis (pointing down). A positive yaw turns +x toward -z.
    pub fn yaw(angle: f64) -> Self {
        Self::from_axis_angle(Vector3::y(), angle, Vector3::zeros())
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    #[inline]
    pub fn transform(&self, p: &Point3) -> Point3 {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    #[inline]
    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    ///
    /// With `b_to_c.compose(&a_to_b)` the result is `a_to_c`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Relative transform between two camera-to-world poses: maps points from
    /// camera `from` into camera `to`.
    pub fn relative(from_c2w: &Pose, to_c2w: &Pose) -> Pose {
        to_c2w.inverse().compose(from_c2w)
    }

    /// Rotation angle in radians, in [0, π].
    pub fn rotation_angle(&self) -> f64 {
        let c = ((self.rotation.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        c.acos()
    }

    /// Max deviation of the rotation from orthonormality, see [`rotation_error`].
    pub fn rotation_error(&self) -> f64 {
        rotation_error(&self.rotation)
    }

    /// Projects a near-orthonormal matrix onto SO(3) via SVD.
    pub fn orthonormalized(rotation: &Matrix3<f64>, translation: Vector3<f64>) -> Result<Pose> {
        let svd = rotation.svd(true, true);
        let (u, vt) = match (svd.u, svd.v_t) {
            (Some(u), Some(vt)) => (u, vt),
            _ => return Err(Error::invalid("rotation SVD failed")),
        };
        let mut r = u * vt;
        if r.determinant() < 0.0 {
            let mut u = u;
            u.column_mut(2).neg_mut();
            r = u * vt;
        }
        Pose::new(r, translation)
    }

    /// Max absolute difference between the two poses' matrix entries.
    pub fn max_abs_diff(&self, other: &Pose) -> f64 {
        let dr = (self.rotation - other.rotation).abs().max();
        let dt = (self.translation - other.translation).abs().max();
        dr.max(dt)
    }
}

/// `max(|RᵀR − I|_max, |det R − 1|)`. NaN entries yield NaN.
pub fn rotation_error(r: &Matrix3<f64>) -> f64 {
    let ortho = (r.transpose() * r - Matrix3::identity()).abs().max();
    let det = (r.determinant() - 1.0).abs();
    if r.iter().any(|x| !x.is_finite()) {
        return f64::NAN;
    }
    ortho.max(det)
}
