//! Deterministic synthetic scenes with analytic depth, used as ground truth.

mod oracle;
pub mod presets;
mod scene;
mod texture;
mod trajectory;

pub use oracle::{boundary_mask, covisibility, noise_factors, CoMovingLayer, Covisibility};
pub use presets::Preset;
pub use scene::{render_depth, render_image, Hit, Primitive, Render, SceneSpec, Shape, CHANNELS};
pub use texture::Texture;
pub use trajectory::{make_trajectory, TrajectoryKind, TrajectorySpec};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Intrinsics, Pose};
use crate::sequence::{FrameSample, FrameSequence};

/// Frames rendered along a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSequence {
    pub scene: SceneSpec,
    pub intrinsics: Intrinsics,
    pub width: usize,
    pub height: usize,
    /// Camera-to-world pose per frame.
    pub poses: Vec<Pose>,
    pub frames: Vec<Render>,
}

impl SyntheticSequence {
    pub fn render(
        scene: &SceneSpec,
        trajectory: &TrajectorySpec,
        k: &Intrinsics,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let poses = make_trajectory(trajectory)?;
        Self::from_poses(scene, poses, k, width, height)
    }

    pub fn from_poses(
        scene: &SceneSpec,
        poses: Vec<Pose>,
        k: &Intrinsics,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let frames = poses
            .par_iter()
            .map(|p| scene.render(p, k, width, height))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            scene: scene.clone(),
            intrinsics: *k,
            width,
            height,
            poses,
            frames,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Transform taking frame `from`'s camera coordinates into frame `to`'s.
    pub fn relative(&self, from: usize, to: usize) -> Pose {
        Pose::relative(&self.poses[from], &self.poses[to])
    }

    /// Evaluation frames whose predictions are the rendered depth times a per-frame
    /// factor (all 1 for perfect predictions). Predicted poses equal the true ones.
    pub fn frame_sequence(&self, pred_factors: &[f64]) -> Result<FrameSequence> {
        if pred_factors.len() != self.len() {
            return Err(Error::invalid(format!(
                "{} prediction factors for {} frames",
                pred_factors.len(),
                self.len()
            )));
        }
        let frames = self
            .frames
            .iter()
            .zip(&self.poses)
            .zip(pred_factors)
            .map(|((r, pose), &s)| {
                Ok(FrameSample {
                    image: r.image.clone(),
                    pred_depth: r.depth.scaled(s)?,
                    gt_depth: r.depth.clone(),
                    gt_pose: *pose,
                    pred_pose: Some(*pose),
                    intrinsics: self.intrinsics,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        FrameSequence::new(frames)
    }
}
