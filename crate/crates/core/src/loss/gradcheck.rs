//! Central finite-difference checks of the analytic loss gradients.
//!
//! Random problems keep every non-smooth point (min/max ties, abs kinks, bilinear
//! grid lines, validity borders) out of reach of the difference step: pixels whose
//! sample lands near a grid line or whose competing terms are close are left out of
//! the frozen mask.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::depth::geometric_error;
use super::gradient::source_l1;
use super::{motion_mask, GradientProblem, LossKind, MOTION_THRESHOLD};
use crate::error::{Error, Result};
use crate::geometry::{
    depth_consistency_pair, reproject, warp_backward, DepthMap, Grid, ImageGrid, Intrinsics,
    MaskMap, Pose,
};
use crate::numeric::central_difference;

/// Difference step relative to each depth value.
pub const FD_RELATIVE_STEP: f64 = 1e-3;

/// Entries whose gradients are below this fraction of the largest one are compared
/// against that floor instead of their own magnitude.
const RELATIVE_FLOOR: f64 = 1e-6;

/// Distance to the nearest grid line a sample must keep, in pixels.
const GRID_MARGIN: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub kind: LossKind,
    /// Largest per-entry relative error between analytic and numeric gradients.
    pub max_rel_err: f64,
    /// Number of depth entries compared.
    pub checked: usize,
    /// Entries with a nonzero analytic gradient.
    pub active: usize,
}

/// Compares the analytic gradient with central differences at every valid entry.
pub fn check_gradient(problem: &GradientProblem, depth: &DepthMap) -> Result<GradCheckReport> {
    let analytic = problem.gradient(depth)?;
    let valid = depth.valid().as_slice().to_vec();
    let x = depth.values().as_slice().to_vec();
    let (w, h) = (depth.width(), depth.height());
    let numeric = central_difference(
        &x,
        |i, xi| if valid[i] { FD_RELATIVE_STEP * xi.abs() } else { 0.0 },
        |probe| {
            let d = DepthMap::new(Grid::from_vec(w, h, probe.to_vec())?, depth.valid().clone())?;
            problem.value(&d)
        },
    )?;
    let scale = analytic.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    let floor = RELATIVE_FLOOR * scale;
    let mut max_rel_err = 0.0f64;
    let mut checked = 0;
    for (i, (&a, &f)) in analytic.iter().zip(&numeric).enumerate() {
        if !valid[i] {
            continue;
        }
        checked += 1;
        let denom = a.abs().max(f.abs()).max(floor);
        let e = if denom == 0.0 { 0.0 } else { (a - f).abs() / denom };
        max_rel_err = max_rel_err.max(e);
    }
    Ok(GradCheckReport {
        kind: problem.kind(),
        max_rel_err,
        checked,
        active: analytic.iter().filter(|g| **g != 0.0).count(),
    })
}

/// Builds a random problem and runs [`check_gradient`] on it.
pub fn gradcheck(kind: LossKind, size: usize, seed: u64) -> Result<GradCheckReport> {
    let (problem, depth) = random_problem(kind, size, seed)?;
    check_gradient(&problem, &depth)
}

fn frac_ok(x: f64) -> bool {
    let f = x - x.floor();
    (GRID_MARGIN..=1.0 - GRID_MARGIN).contains(&f)
}

fn in_cell_interior(u: f64, v: f64, w: usize, h: usize) -> bool {
    u > 0.0 && v > 0.0 && u < (w - 1) as f64 && v < (h - 1) as f64 && frac_ok(u) && frac_ok(v)
}

fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize, ch: usize, lo: f64, hi: f64) -> Result<ImageGrid> {
    ImageGrid::from_fn(w, h, ch, |_, _, _| rng.random_range(lo..hi))
}

fn random_pose(rng: &mut ChaCha8Rng, tx: f64) -> Pose {
    let axis = Vector3::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    );
    let t = Vector3::new(
        tx + rng.random_range(-0.05..0.05),
        rng.random_range(-0.15..0.15),
        rng.random_range(-0.1..0.1),
    );
    Pose::from_axis_angle(axis, rng.random_range(0.01..0.04), t)
}

/// Random kink-free problem of side `size` and the depth to check it at.
pub fn random_problem(kind: LossKind, size: usize, seed: u64) -> Result<(GradientProblem, DepthMap)> {
    if size < 4 {
        return Err(Error::invalid(format!("gradient-check size must be >= 4, got {size}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (kind as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let n = size;
    let k = Intrinsics::new(n as f64, n as f64, (n - 1) as f64 / 2.0, (n - 1) as f64 / 2.0)?;
    let min_domain = (n * n / 8).max(2);
    match kind {
        LossKind::Geometric => {
            for _ in 0..64 {
                let depth = DepthMap::from_fn(n, n, |_, _| rng.random_range(2.0..4.0))?;
                let src = DepthMap::from_fn(n, n, |_, _| rng.random_range(2.0..4.0))?;
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                let pose = random_pose(&mut rng, sign * 0.3);
                let reproj = reproject(&depth, &pose, &k);
                let pair = depth_consistency_pair(&depth, &src, &pose, &k)?;
                let mask = Grid::from_fn(n, n, |u, v| {
                    let keep = rng.random_bool(0.85);
                    let Some(r) = reproj.get(u, v) else {
                        return false;
                    };
                    let (Some(a), Some(b)) = (pair.computed.get(u, v), pair.interpolated.get(u, v)) else {
                        return false;
                    };
                    keep && in_cell_interior(r.u, r.v, n, n) && geometric_error(a, b) > 0.02
                });
                if mask.count() >= min_domain {
                    let p = GradientProblem::Geometric {
                        src_depth: src,
                        pose_tgt_to_src: pose,
                        k,
                        mask,
                    };
                    return Ok((p, depth));
                }
            }
            Err(Error::invalid("could not build a geometric problem with enough valid pixels"))
        }
        LossKind::PhotometricL1 => {
            for _ in 0..64 {
                let depth = DepthMap::from_fn(n, n, |_, _| rng.random_range(2.0..4.0))?;
                let target = random_image(&mut rng, n, n, 3, 0.0, 1.0)?;
                let sources: Vec<(ImageGrid, Pose)> = [0.3, -0.3]
                    .into_iter()
                    .map(|tx| Ok((random_image(&mut rng, n, n, 3, 0.05, 0.95)?, random_pose(&mut rng, tx))))
                    .collect::<Result<_>>()?;
                let warped: Vec<(ImageGrid, MaskMap)> = sources
                    .iter()
                    .map(|(img, pose)| warp_backward(img, &depth, pose, &k))
                    .collect::<Result<_>>()?;
                let errors = source_l1(&target, &warped)?;
                let reprojs: Vec<_> = sources.iter().map(|(_, pose)| reproject(&depth, pose, &k)).collect();
                let mask = Grid::from_fn(n, n, |u, v| {
                    let keep = rng.random_bool(0.85);
                    let interior = reprojs.iter().all(|r| {
                        r.get(u, v).as_ref().is_some_and(|r| in_cell_interior(r.u, r.v, n, n))
                    });
                    if !(keep && interior) {
                        return false;
                    }
                    let (Some(e0), Some(e1)) = (*errors[0].get(u, v), *errors[1].get(u, v)) else {
                        return false;
                    };
                    let best = if e0 <= e1 { 0 } else { 1 };
                    let t = target.pixel(u, v);
                    let wp = warped[best].0.pixel(u, v);
                    (e0 - e1).abs() > 0.02 && t.iter().zip(wp).all(|(a, b)| (a - b).abs() > 0.02)
                });
                if mask.count() >= min_domain {
                    let p = GradientProblem::PhotometricL1 {
                        target,
                        sources,
                        k,
                        mask,
                    };
                    return Ok((p, depth));
                }
            }
            Err(Error::invalid("could not build a photometric problem with enough valid pixels"))
        }
        LossKind::Smoothness => {
            // Inverse depth steps of at least 0.08 between neighbors keep every
            // forward difference away from zero.
            let depth = DepthMap::from_fn(n, n, |u, v| {
                1.0 / (0.2 + 0.1 * ((u + 2 * v) % 5) as f64 + rng.random_range(0.0..0.02))
            })?;
            let image = random_image(&mut rng, n, n, 3, 0.0, 1.0)?;
            Ok((GradientProblem::Smoothness { image }, depth))
        }
        LossKind::Motion => {
            let depth = DepthMap::from_fn(n, n, |_, _| rng.random_range(1.0..5.0))?;
            let teacher = DepthMap::from_fn(n, n, |u, v| {
                let d = depth.get(u, v).expect("dense");
                let ratio = match rng.random_range(0..3) {
                    0 => rng.random_range(1.8..2.5),
                    1 => rng.random_range(0.3..0.5),
                    _ => rng.random_range(0.85..1.15),
                };
                d * ratio
            })?;
            let m = motion_mask(&depth, &teacher, MOTION_THRESHOLD)?;
            Ok((
                GradientProblem::Motion {
                    teacher,
                    motion_mask: m,
                },
                depth,
            ))
        }
        LossKind::Reference => {
            let d_t = DepthMap::from_fn(n, n, |_, _| rng.random_range(1.0..5.0))?;
            let d_ref = DepthMap::from_fn(n, n, |u, v| {
                let off = rng.random_range(0.1..0.5);
                d_t.get(u, v).expect("dense") + if rng.random_bool(0.5) { off } else { -off }
            })?;
            Ok((GradientProblem::Reference { d_t }, d_ref))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_loss_passes_on_a_few_seeds() {
        for kind in LossKind::ALL {
            for seed in 0..3 {
                let r = gradcheck(kind, 8, seed).unwrap();
                assert!(r.max_rel_err < 1e-4, "{kind} seed {seed}: {r:?}");
                assert_eq!(r.checked, 64);
                assert!(r.active > 0, "{kind} seed {seed}: no active entries");
            }
        }
    }

    #[test]
    fn rejects_tiny_sizes() {
        assert!(random_problem(LossKind::Geometric, 3, 0).is_err());
    }
}
