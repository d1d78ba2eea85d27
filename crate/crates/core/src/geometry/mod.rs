//! Pinhole camera math, rigid transforms, rasters and backward warping.

mod camera;
mod grid;
mod pose;
mod sample;
mod warp;

pub use camera::{backproject, project, Intrinsics, Point3};
pub(crate) use camera::{backproject_unchecked, project_unchecked};
pub use grid::{DepthMap, Grid, ImageGrid, MaskMap, ScalarMap};
pub(crate) use grid::check_shape;
pub use pose::{rotation_error, Pose, ROTATION_TOLERANCE};
pub use sample::{sample_depth, sample_image_into, BilinearSample, CoordGrid, SNAP_EPS};
pub(crate) use sample::{bilinear_with_gradient, sample_depth_pair};
pub use warp::{
    depth_consistency_pair, reproject, warp_backward, warp_backward_masked, warp_round_trip,
    DepthPair, Reprojection,
};
