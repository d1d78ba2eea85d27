//! Analytic gradients of loss scalars with respect to a depth map.
//!
//! Masks are frozen when a problem is built and treated as constants. Each problem
//! evaluates its scalar through the same code paths as the loss functions, so the
//! finite-difference check in [`super::gradcheck`] compares against production code.

use std::fmt;
use std::str::FromStr;

use super::depth::{geometric_error_grad, image_edges};
use super::{geometric_loss, l1_error, motion_loss, photometric_loss, reference_loss, smoothness_loss};
use super::PhotometricConfig;
use crate::error::{Error, Result};
use crate::geometry::{
    backproject_unchecked, bilinear_with_gradient, depth_consistency_pair, project_unchecked,
    warp_backward, DepthMap, Grid, ImageGrid, Intrinsics, MaskMap, Pose, ScalarMap,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    Geometric,
    PhotometricL1,
    Smoothness,
    Motion,
    Reference,
}

impl LossKind {
    pub const ALL: [LossKind; 5] = [
        LossKind::Geometric,
        LossKind::PhotometricL1,
        LossKind::Smoothness,
        LossKind::Motion,
        LossKind::Reference,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Geometric => "geometric",
            LossKind::PhotometricL1 => "photometric",
            LossKind::Smoothness => "smoothness",
            LossKind::Motion => "motion",
            LossKind::Reference => "reference",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "geometric" => Ok(LossKind::Geometric),
            "photometric" | "photometric-l1" => Ok(LossKind::PhotometricL1),
            "smoothness" => Ok(LossKind::Smoothness),
            "motion" => Ok(LossKind::Motion),
            "reference" => Ok(LossKind::Reference),
            other => Err(Error::invalid(format!(
                "unsupported loss '{other}' (expected geometric, photometric, smoothness, motion or reference)"
            ))),
        }
    }
}

/// A loss scalar seen as a function of one depth map, with everything else fixed.
#[derive(Debug, Clone)]
pub enum GradientProblem {
    /// Geometric loss of the target depth against a fixed source depth.
    Geometric {
        src_depth: DepthMap,
        pose_tgt_to_src: Pose,
        k: Intrinsics,
        mask: MaskMap,
    },
    /// L1 part of the photometric loss: per-pixel minimum over warped sources.
    PhotometricL1 {
        target: ImageGrid,
        /// Source images with their target-to-source poses.
        sources: Vec<(ImageGrid, Pose)>,
        k: Intrinsics,
        mask: MaskMap,
    },
    Smoothness { image: ImageGrid },
    /// `motion_mask` is the frozen mask; the loss runs where it is false.
    Motion { teacher: DepthMap, motion_mask: MaskMap },
    /// Differentiated with respect to the reference depth; `d_t` is detached.
    Reference { d_t: DepthMap },
}

/// Target pixel carried into a source view, with derivatives of the source pixel
/// coordinates and source-frame depth with respect to the target depth.
struct Carried {
    u: f64,
    v: f64,
    z: f64,
    du: f64,
    dv: f64,
    dz: f64,
}

fn carry(k: &Intrinsics, pose: &Pose, u: usize, v: usize, d: f64) -> Option<Carried> {
    let q = pose.transform(&backproject_unchecked(k, u as f64, v as f64, d));
    if !(q.z > 0.0) {
        return None;
    }
    let a = pose.rotate(&k.ray(u as f64, v as f64));
    let (us, vs) = project_unchecked(k, &q);
    let z2 = q.z * q.z;
    Some(Carried {
        u: us,
        v: vs,
        z: q.z,
        du: k.fx * (a.x * q.z - q.x * a.z) / z2,
        dv: k.fy * (a.y * q.z - q.y * a.z) / z2,
        dz: a.z,
    })
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn undefined(u: usize, v: usize) -> Error {
    Error::invalid(format!("gradient undefined at pixel ({u}, {v}): sample on a grid line or outside"))
}

impl GradientProblem {
    pub fn kind(&self) -> LossKind {
        match self {
            GradientProblem::Geometric { .. } => LossKind::Geometric,
            GradientProblem::PhotometricL1 { .. } => LossKind::PhotometricL1,
            GradientProblem::Smoothness { .. } => LossKind::Smoothness,
            GradientProblem::Motion { .. } => LossKind::Motion,
            GradientProblem::Reference { .. } => LossKind::Reference,
        }
    }

    /// Loss scalar at `depth`. Errors when a frozen-mask pixel loses validity.
    pub fn value(&self, depth: &DepthMap) -> Result<f64> {
        match self {
            GradientProblem::Geometric {
                src_depth,
                pose_tgt_to_src,
                k,
                mask,
            } => {
                let pair = depth_consistency_pair(depth, src_depth, pose_tgt_to_src, k)?;
                let all = Grid::filled(mask.width(), mask.height(), true);
                let r = geometric_loss(&pair, mask, &all, &all)?;
                if r.mask != *mask {
                    return Err(Error::invalid("depth pair validity changed inside the frozen mask"));
                }
                Ok(r.scalar)
            }
            GradientProblem::PhotometricL1 {
                target,
                sources,
                k,
                mask,
            } => {
                let warped: Vec<(ImageGrid, MaskMap)> = sources
                    .iter()
                    .map(|(img, pose)| warp_backward(img, depth, pose, k))
                    .collect::<Result<_>>()?;
                let all = Grid::filled(mask.width(), mask.height(), true);
                let l1_only = PhotometricConfig::with_alpha(0.0)?;
                let r = photometric_loss(target, &warped, mask, &all, &l1_only)?;
                if r.mask != *mask {
                    return Err(Error::invalid("warp validity changed inside the frozen mask"));
                }
                Ok(r.scalar)
            }
            GradientProblem::Smoothness { image } => Ok(smoothness_loss(depth, image)?.scalar),
            GradientProblem::Motion {
                teacher,
                motion_mask,
            } => Ok(motion_loss(depth, teacher, motion_mask)?.scalar),
            GradientProblem::Reference { d_t } => Ok(reference_loss(d_t, depth)?.scalar),
        }
    }

    /// Analytic gradient of [`GradientProblem::value`] at `depth`.
    pub fn gradient(&self, depth: &DepthMap) -> Result<ScalarMap> {
        let (w, h) = (depth.width(), depth.height());
        let mut grad = Grid::filled(w, h, 0.0);
        match self {
            GradientProblem::Geometric {
                src_depth,
                pose_tgt_to_src,
                k,
                mask,
            } => {
                let n = mask.count();
                if n == 0 {
                    return Ok(grad);
                }
                let src_vals = src_depth.values().as_slice();
                let src_valid = src_depth.valid().as_slice();
                for v in 0..h {
                    for u in 0..w {
                        if !mask.get(u, v) {
                            continue;
                        }
                        let d = depth.get(u, v).ok_or_else(|| undefined(u, v))?;
                        let c = carry(k, pose_tgt_to_src, u, v, d).ok_or_else(|| undefined(u, v))?;
                        let (i, gu, gv) = bilinear_with_gradient(c.u, c.v, w, h, |j| {
                            src_valid[j].then_some(src_vals[j])
                        })
                        .ok_or_else(|| undefined(u, v))?;
                        let (ga, gb) = geometric_error_grad(c.z, i);
                        *grad.get_mut(u, v) = (ga * c.dz + gb * (gu * c.du + gv * c.dv)) / n as f64;
                    }
                }
            }
            GradientProblem::PhotometricL1 {
                target,
                sources,
                k,
                mask,
            } => {
                let n = mask.count();
                if n == 0 {
                    return Ok(grad);
                }
                let ch = target.channels();
                for v in 0..h {
                    for u in 0..w {
                        if !mask.get(u, v) {
                            continue;
                        }
                        let d = depth.get(u, v).ok_or_else(|| undefined(u, v))?;
                        let t = target.pixel(u, v);
                        // (error, d error / d depth) of the best source so far.
                        let mut best: Option<(f64, f64)> = None;
                        for (img, pose) in sources {
                            let Some(c) = carry(k, pose, u, v, d) else {
                                continue;
                            };
                            let data = img.as_slice();
                            let mut err = 0.0;
                            let mut derr = 0.0;
                            let mut ok = true;
                            for (ci, tc) in t.iter().enumerate() {
                                match bilinear_with_gradient(c.u, c.v, w, h, |j| Some(data[j * ch + ci])) {
                                    Some((val, gu, gv)) => {
                                        err += (tc - val).abs();
                                        derr += sign(val - tc) * (gu * c.du + gv * c.dv);
                                    }
                                    None => ok = false,
                                }
                            }
                            if !ok {
                                continue;
                            }
                            let (err, derr) = (err / ch as f64, derr / ch as f64);
                            if best.is_none_or(|(b, _)| err < b) {
                                best = Some((err, derr));
                            }
                        }
                        let (_, derr) = best.ok_or_else(|| undefined(u, v))?;
                        *grad.get_mut(u, v) = derr / n as f64;
                    }
                }
            }
            GradientProblem::Smoothness { image } => {
                if !depth.is_fully_valid() {
                    return Err(Error::invalid("smoothness loss needs a dense depth map"));
                }
                let d = depth.values().as_slice();
                let count = d.len() as f64;
                let inv: Vec<f64> = d.iter().map(|x| 1.0 / x).collect();
                let m = inv.iter().sum::<f64>() / count;
                let nrm: Vec<f64> = inv.iter().map(|x| x / m).collect();
                let (gx, gy) = image_edges(image);
                // g = ∂L/∂n
                let mut g = vec![0.0; d.len()];
                for v in 0..h {
                    for u in 0..w {
                        let i = v * w + u;
                        if u + 1 < w {
                            let s = sign(nrm[i + 1] - nrm[i]) * (-gx.get(u, v)).exp() / count;
                            g[i + 1] += s;
                            g[i] -= s;
                        }
                        if v + 1 < h {
                            let s = sign(nrm[i + w] - nrm[i]) * (-gy.get(u, v)).exp() / count;
                            g[i + w] += s;
                            g[i] -= s;
                        }
                    }
                }
                let coupling: f64 = g.iter().zip(&inv).map(|(gp, ip)| gp * ip).sum::<f64>() / (count * m * m);
                for (i, out) in grad.as_mut_slice().iter_mut().enumerate() {
                    let d_inv = g[i] / m - coupling;
                    *out = -d_inv / (d[i] * d[i]);
                }
            }
            GradientProblem::Motion {
                teacher,
                motion_mask,
            } => {
                let domain = motion_loss(depth, teacher, motion_mask)?.mask;
                let n = domain.count();
                for v in 0..h {
                    for u in 0..w {
                        if *domain.get(u, v) {
                            let (a, b) = (depth.get(u, v).unwrap(), teacher.get(u, v).unwrap());
                            *grad.get_mut(u, v) = sign(a - b) / n as f64;
                        }
                    }
                }
            }
            GradientProblem::Reference { d_t } => {
                let domain = reference_loss(d_t, depth)?.mask;
                let n = domain.count();
                for v in 0..h {
                    for u in 0..w {
                        if *domain.get(u, v) {
                            let (a, b) = (depth.get(u, v).unwrap(), d_t.get(u, v).unwrap());
                            *grad.get_mut(u, v) = sign(a - b) / n as f64;
                        }
                    }
                }
            }
        }
        Ok(grad)
    }
}

/// Gradient of the problem's loss scalar with respect to `wrt`.
pub fn loss_gradient(problem: &GradientProblem, wrt: &DepthMap) -> Result<ScalarMap> {
    problem.gradient(wrt)
}

/// L1 photometric error of every source against the target; used to pick domains.
pub(crate) fn source_l1(target: &ImageGrid, warped: &[(ImageGrid, MaskMap)]) -> Result<Vec<Grid<Option<f64>>>> {
    warped
        .iter()
        .map(|(img, valid)| {
            let e = l1_error(target, img)?;
            Ok(Grid::from_fn(e.width(), e.height(), |u, v| valid.get(u, v).then(|| *e.get(u, v))))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    #[test]
    fn kind_names_round_trip() {
        for kind in LossKind::ALL {
            assert_eq!(kind.name().parse::<LossKind>().unwrap(), kind);
        }
        assert!(matches!("ssim".parse::<LossKind>(), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn reference_gradient_is_sign_over_n() {
        let d_t = DepthMap::from_values(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let d_ref = DepthMap::from_values(2, 2, vec![1.5, 1.5, 3.5, 3.0]).unwrap();
        let p = GradientProblem::Reference { d_t };
        let g = loss_gradient(&p, &d_ref).unwrap();
        assert_eq!(g.as_slice(), &[0.25, -0.25, 0.25, -0.25]);
    }

    #[test]
    fn geometric_gradient_zero_outside_mask() {
        let (w, h) = (6, 5);
        let k = Intrinsics::centered(6.0, w, h).unwrap();
        let src = DepthMap::from_fn(w, h, |u, v| 3.0 + 0.1 * u as f64 + 0.05 * v as f64).unwrap();
        let tgt = DepthMap::constant(w, h, 3.3).unwrap();
        let mut mask = Grid::filled(w, h, false);
        *mask.get_mut(2, 2) = true;
        let p = GradientProblem::Geometric {
            src_depth: src,
            pose_tgt_to_src: Pose::from_translation(Vector3::new(0.13, 0.07, 0.0)),
            k,
            mask,
        };
        let g = p.gradient(&tgt).unwrap();
        assert!(*g.get(2, 2) != 0.0);
        assert_eq!(g.iter().filter(|&&x| x != 0.0).count(), 1);
    }
}
