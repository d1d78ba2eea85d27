//! Backward warping between views with known depth and relative pose.

use rayon::prelude::*;

use super::camera::{backproject_unchecked, project_unchecked, Intrinsics};
use super::grid::{check_shape, DepthMap, Grid, ImageGrid, MaskMap};
use super::pose::Pose;
use super::sample::{sample_depth, sample_image_grid, CoordGrid};
use crate::error::{Error, Result};

/// A target pixel carried into the source view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reprojection {
    /// Sub-pixel location in the source image.
    pub u: f64,
    pub v: f64,
    /// Depth of the transformed point in the source camera.
    pub z: f64,
}

/// For every target pixel with valid depth: back-project, move into the source
/// camera, and project. `None` where depth is invalid or the point lands behind
/// the source camera.
pub fn reproject(tgt_depth: &DepthMap, pose_tgt_to_src: &Pose, k: &Intrinsics) -> Grid<Option<Reprojection>> {
    let (w, h) = (tgt_depth.width(), tgt_depth.height());
    let cells: Vec<Option<Reprojection>> = (0..w * h)
        .into_par_iter()
        .map(|i| {
            let (u, v) = (i % w, i / w);
            let d = tgt_depth.get(u, v)?;
            let p = pose_tgt_to_src.transform(&backproject_unchecked(k, u as f64, v as f64, d));
            if !(p.z > 0.0) {
                return None;
            }
            let (us, vs) = project_unchecked(k, &p);
            Some(Reprojection { u: us, v: vs, z: p.z })
        })
        .collect();
    Grid::from_vec(w, h, cells).expect("shape")
}

fn coords_of(reproj: &Grid<Option<Reprojection>>) -> CoordGrid {
    reproj.map(|r| r.map(|r| (r.u, r.v)))
}

/// Synthesizes the target view from `src` using target depth and the target-to-source pose.
///
/// Pixels are invalid where target depth is invalid, the point falls behind the
/// source camera, or its projection leaves the source image.
pub fn warp_backward(
    src: &ImageGrid,
    tgt_depth: &DepthMap,
    pose_tgt_to_src: &Pose,
    k: &Intrinsics,
) -> Result<(ImageGrid, MaskMap)> {
    warp_backward_masked(src, None, tgt_depth, pose_tgt_to_src, k)
}

/// [`warp_backward`] where `src_valid` restricts which source pixels may be read.
pub fn warp_backward_masked(
    src: &ImageGrid,
    src_valid: Option<&MaskMap>,
    tgt_depth: &DepthMap,
    pose_tgt_to_src: &Pose,
    k: &Intrinsics,
) -> Result<(ImageGrid, MaskMap)> {
    if let Some(m) = src_valid {
        if m.width() != src.width() || m.height() != src.height() {
            return Err(Error::shape(
                format!("{}x{}", src.width(), src.height()),
                format!("{}x{}", m.width(), m.height()),
            ));
        }
    }
    let coords = coords_of(&reproject(tgt_depth, pose_tgt_to_src, k));
    Ok(sample_image_grid(src, src_valid, &coords))
}

/// `I_t → I_s → I_t`: warp the target into the source view with source depth, then back
/// with target depth. Valid only where both legs are valid.
pub fn warp_round_trip(
    img_t: &ImageGrid,
    depth_t: &DepthMap,
    depth_s: &DepthMap,
    pose_t_to_s: &Pose,
    k: &Intrinsics,
) -> Result<(ImageGrid, MaskMap)> {
    if !depth_t.same_shape(depth_s) {
        return Err(Error::shape(
            format!("{}x{}", depth_t.width(), depth_t.height()),
            format!("{}x{}", depth_s.width(), depth_s.height()),
        ));
    }
    let (in_s, valid_s) = warp_backward(img_t, depth_s, &pose_t_to_s.inverse(), k)?;
    warp_backward_masked(&in_s, Some(&valid_s), depth_t, pose_t_to_s, k)
}

/// Cross-view depth pair for the geometric consistency loss.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthPair {
    /// Depth of each target point after moving it into the source camera.
    pub computed: DepthMap,
    /// Source depth map bilinearly sampled at the projected location.
    pub interpolated: DepthMap,
    pub valid: MaskMap,
}

/// Computes the per-pixel depth pair used by the geometric loss.
pub fn depth_consistency_pair(
    tgt_depth: &DepthMap,
    src_depth: &DepthMap,
    pose_tgt_to_src: &Pose,
    k: &Intrinsics,
) -> Result<DepthPair> {
    check_shape(tgt_depth.values(), src_depth.values())?;
    let (w, h) = (tgt_depth.width(), tgt_depth.height());
    let reproj = reproject(tgt_depth, pose_tgt_to_src, k);
    let pairs: Vec<Option<(f64, f64)>> = reproj
        .as_slice()
        .par_iter()
        .map(|r| {
            let r = r.as_ref()?;
            let i = sample_depth(src_depth, r.u, r.v)?;
            (i > 0.0).then_some((r.z, i))
        })
        .collect();
    let valid = Grid::from_vec(w, h, pairs.iter().map(Option::is_some).collect())?;
    let computed = Grid::from_vec(w, h, pairs.iter().map(|p| p.map_or(0.0, |p| p.0)).collect())?;
    let interpolated = Grid::from_vec(w, h, pairs.iter().map(|p| p.map_or(0.0, |p| p.1)).collect())?;
    Ok(DepthPair {
        computed: DepthMap::new(computed, valid.clone())?,
        interpolated: DepthMap::new(interpolated, valid.clone())?,
        valid,
    })
}
