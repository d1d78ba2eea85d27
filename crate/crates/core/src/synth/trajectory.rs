//! Camera-to-world pose sequences.

use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{Point3, Pose};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrajectoryKind {
    Static,
    /// `step` meters along +x per frame.
    TranslateX,
    /// `step` meters along +z per frame.
    TranslateZ,
    /// Orbit around a pivot on the initial optical axis, `step` radians of yaw per frame.
    Arc { pivot_depth: f64 },
    /// Seeded random walk: up to `step` meters of translation and `step / 10`
    /// radians of rotation per frame.
    Wander,
}

impl TrajectoryKind {
    pub const DEFAULT_PIVOT: f64 = 6.0;
}

impl fmt::Display for TrajectoryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrajectoryKind::Static => "static",
            TrajectoryKind::TranslateX => "translate-x",
            TrajectoryKind::TranslateZ => "translate-z",
            TrajectoryKind::Arc { .. } => "arc",
            TrajectoryKind::Wander => "wander",
        })
    }
}

impl FromStr for TrajectoryKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "static" => Ok(TrajectoryKind::Static),
            "translate-x" => Ok(TrajectoryKind::TranslateX),
            "translate-z" => Ok(TrajectoryKind::TranslateZ),
            "arc" => Ok(TrajectoryKind::Arc {
                pivot_depth: Self::DEFAULT_PIVOT,
            }),
            "wander" => Ok(TrajectoryKind::Wander),
            other => Err(Error::invalid(format!(
                "unknown trajectory '{other}' (expected static, translate-x, translate-z, arc or wander)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySpec {
    pub kind: TrajectoryKind,
    /// Number of frames.
    pub k: usize,
    pub step: f64,
    pub seed: u64,
}

/// Camera-to-world poses of every frame; frame 0 is the identity.
pub fn make_trajectory(spec: &TrajectorySpec) -> Result<Vec<Pose>> {
    if spec.k == 0 {
        return Err(Error::invalid("trajectory needs at least one frame"));
    }
    if !spec.step.is_finite() {
        return Err(Error::invalid("trajectory step must be finite"));
    }
    let step = spec.step;
    let poses = match spec.kind {
        TrajectoryKind::Static => vec![Pose::identity(); spec.k],
        TrajectoryKind::TranslateX => (0..spec.k)
            .map(|i| Pose::from_translation(Vector3::new(step * i as f64, 0.0, 0.0)))
            .collect(),
        TrajectoryKind::TranslateZ => (0..spec.k)
            .map(|i| Pose::from_translation(Vector3::new(0.0, 0.0, step * i as f64)))
            .collect(),
        TrajectoryKind::Arc { pivot_depth } => {
            if !(pivot_depth.is_finite() && pivot_depth > 0.0) {
                return Err(Error::invalid("arc pivot depth must be > 0"));
            }
            let pivot = Point3::new(0.0, 0.0, pivot_depth);
            (0..spec.k)
                .map(|i| {
                    let rot = Pose::yaw(step * i as f64);
                    // Keep the pivot on the optical axis at the same distance.
                    let center = pivot - rot.rotate(&Vector3::new(0.0, 0.0, pivot_depth));
                    Pose::new(*rot.rotation(), center.coords)
                })
                .collect::<Result<_>>()?
        }
        TrajectoryKind::Wander => {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            let mut acc = Pose::identity();
            let mut out = Vec::with_capacity(spec.k);
            out.push(acc);
            for _ in 1..spec.k {
                let t = Vector3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-0.3..0.3),
                    rng.random_range(-1.0..1.0),
                ) * step.abs();
                let axis = Vector3::new(
                    rng.random_range(-0.3..0.3),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-0.1..0.1),
                );
                let delta = Pose::from_axis_angle(axis, rng.random_range(0.0..1.0) * step.abs() / 10.0, t);
                acc = acc.compose(&delta);
                out.push(Pose::orthonormalized(acc.rotation(), *acc.translation())?);
            }
            out
        }
    };
    Ok(poses)
}
