//! Fusing per-frame depth predictions into one colored point cloud.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{backproject_unchecked, Point3, Pose};
use crate::sequence::FrameSequence;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point3>,
    pub colors: Vec<[u8; 3]>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn to_u8(x: f64) -> u8 {
    (x.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Lifts every `stride`-th valid predicted pixel (both coordinates multiples of
/// `stride`) of every frame into the reference camera. Points are ordered by frame,
/// then row-major. Poses are the ground truth or the predicted ones.
pub fn fuse_pointcloud(seq: &FrameSequence, ref_index: usize, use_gt_pose: bool, stride: usize) -> Result<PointCloud> {
    if stride == 0 {
        return Err(Error::invalid("stride must be at least 1"));
    }
    if ref_index >= seq.len() {
        return Err(Error::invalid(format!("reference index {ref_index} outside {} frames", seq.len())));
    }
    let poses = seq
        .frames()
        .iter()
        .enumerate()
        .map(|(i, f)| {
            if use_gt_pose {
                Ok(f.gt_pose)
            } else {
                f.pred_pose
                    .ok_or_else(|| Error::invalid(format!("frame {i} has no predicted pose")))
            }
        })
        .collect::<Result<Vec<Pose>>>()?;
    let k = *seq.intrinsics();
    let (w, h) = (seq.width(), seq.height());
    let parts: Vec<PointCloud> = seq
        .frames()
        .par_iter()
        .zip(poses.par_iter())
        .map(|(f, pose)| {
            let to_ref = Pose::relative(pose, &poses[ref_index]);
            let mut part = PointCloud::default();
            for v in (0..h).step_by(stride) {
                for u in (0..w).step_by(stride) {
                    let Some(d) = f.pred_depth.get(u, v) else { continue };
                    part.points.push(to_ref.transform(&backproject_unchecked(&k, u as f64, v as f64, d)));
                    let px = f.image.pixel(u, v);
                    part.colors.push(match px.len() {
                        3.. => [to_u8(px[0]), to_u8(px[1]), to_u8(px[2])],
                        _ => [to_u8(px[0]); 3],
                    });
                }
            }
            part
        })
        .collect();
    let mut cloud = PointCloud::default();
    for p in parts {
        cloud.points.extend(p.points);
        cloud.colors.extend(p.colors);
    }
    Ok(cloud)
}

pub fn format_ply(cloud: &PointCloud) -> Result<String> {
    if cloud.points.len() != cloud.colors.len() {
        return Err(Error::invalid("point and color counts differ"));
    }
    let mut out = format!(
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\nproperty uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n",
        cloud.len()
    );
    for (p, c) in cloud.points.iter().zip(&cloud.colors) {
        if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
            return Err(Error::invalid(format!("non-finite point ({}, {}, {})", p.x, p.y, p.z)));
        }
        writeln!(out, "{} {} {} {} {} {}", p.x, p.y, p.z, c[0], c[1], c[2]).unwrap();
    }
    Ok(out)
}

/// ASCII PLY with `x y z red green blue` per vertex.
pub fn write_ply(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_ply(cloud)?).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{DepthMap, ImageGrid, Intrinsics};
    use crate::sequence::FrameSample;
    use nalgebra::Vector3;

    fn frame(w: usize, h: usize, pose: Pose) -> FrameSample {
        FrameSample {
            image: ImageGrid::constant(w, h, 3, 1.0).unwrap(),
            pred_depth: DepthMap::from_fn(w, h, |u, v| 1.0 + (u + v) as f64 * 0.1).unwrap(),
            gt_depth: DepthMap::constant(w, h, 1.0).unwrap(),
            gt_pose: pose,
            pred_pose: None,
            intrinsics: Intrinsics::centered(5.0, w, h).unwrap(),
        }
    }

    #[test]
    fn counts_points() {
        let seq = FrameSequence::new(vec![frame(6, 4, Pose::identity())]).unwrap();
        assert_eq!(fuse_pointcloud(&seq, 0, true, 1).unwrap().len(), 24);
        assert_eq!(fuse_pointcloud(&seq, 0, true, 2).unwrap().len(), 6);
        assert_eq!(fuse_pointcloud(&seq, 0, true, 5).unwrap().len(), 2);
        assert!(fuse_pointcloud(&seq, 0, false, 1).is_err());
        assert!(fuse_pointcloud(&seq, 1, true, 1).is_err());
        assert!(fuse_pointcloud(&seq, 0, true, 0).is_err());
    }

    #[test]
    fn reference_frame_points_are_back_projections() {
        let t = Pose::from_translation(Vector3::new(0.5, 0.0, 0.0));
        let seq = FrameSequence::new(vec![frame(3, 3, Pose::identity()), frame(3, 3, t)]).unwrap();
        let c = fuse_pointcloud(&seq, 0, true, 1).unwrap();
        assert_eq!(c.len(), 18);
        let k = seq.intrinsics();
        assert_eq!(c.points[4], backproject_unchecked(k, 1.0, 1.0, 1.2));
        // Frame 1 sits 0.5 to the right of the reference camera.
        assert!((c.points[13].x - (c.points[4].x + 0.5)).abs() < 1e-15);
    }

    #[test]
    fn ply_text() {
        let empty = format_ply(&PointCloud::default()).unwrap();
        assert!(empty.contains("element vertex 0\n") && empty.ends_with("end_header\n"));
        let one = PointCloud {
            points: vec![Point3::new(1.0, 2.0, 3.0)],
            colors: vec![[255; 3]],
        };
        let s = format_ply(&one).unwrap();
        assert!(s.ends_with("end_header\n1 2 3 255 255 255\n"));
        let bad = PointCloud {
            points: vec![Point3::new(f64::NAN, 0.0, 0.0)],
            colors: vec![[0; 3]],
        };
        assert!(format_ply(&bad).is_err());
    }
}
