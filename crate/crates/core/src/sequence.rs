//! Frames with predictions, ground truth and poses, as consumed by evaluation and fusion.

use crate::error::{Error, Result};
use crate::geometry::{DepthMap, ImageGrid, Intrinsics, Pose};

#[derive(Debug, Clone, PartialEq)]
pub struct FrameSample {
    pub image: ImageGrid,
    pub pred_depth: DepthMap,
    /// May be sparse.
    pub gt_depth: DepthMap,
    /// Camera-to-world.
    pub gt_pose: Pose,
    /// Camera-to-world pose estimated alongside the prediction, if any.
    pub pred_pose: Option<Pose>,
    pub intrinsics: Intrinsics,
}

impl FrameSample {
    pub fn width(&self) -> usize {
        self.pred_depth.width()
    }

    pub fn height(&self) -> usize {
        self.pred_depth.height()
    }

    fn check(&self) -> Result<()> {
        let (w, h) = (self.width(), self.height());
        let shape = |what: &str, ww: usize, hh: usize| -> Result<()> {
            if (ww, hh) != (w, h) {
                return Err(Error::shape(format!("{what} {w}x{h}"), format!("{ww}x{hh}")));
            }
            Ok(())
        };
        shape("gt depth", self.gt_depth.width(), self.gt_depth.height())?;
        shape("image", self.image.width(), self.image.height())
    }
}

/// Checks that `frames` is non-empty and shares one resolution and intrinsics.
pub(crate) fn check_frames(frames: &[FrameSample]) -> Result<()> {
    let Some(first) = frames.first() else {
        return Err(Error::EmptyDomain("sequence has no frames".into()));
    };
    let (w, h, k) = (first.width(), first.height(), first.intrinsics);
    for (i, f) in frames.iter().enumerate() {
        f.check().map_err(|e| Error::invalid(format!("frame {i}: {e}")))?;
        if (f.width(), f.height()) != (w, h) {
            return Err(Error::invalid(format!(
                "frame {i}: resolution {}x{} differs from {w}x{h}",
                f.width(),
                f.height()
            )));
        }
        if f.intrinsics != k {
            return Err(Error::invalid(format!("frame {i}: intrinsics differ from frame 0")));
        }
    }
    Ok(())
}

/// A non-empty run of frames sharing resolution and intrinsics.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    frames: Vec<FrameSample>,
}

impl FrameSequence {
    pub fn new(frames: Vec<FrameSample>) -> Result<Self> {
        check_frames(&frames)?;
        Ok(Self { frames })
    }

    pub fn frames(&self) -> &[FrameSample] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn width(&self) -> usize {
        self.frames[0].width()
    }

    pub fn height(&self) -> usize {
        self.frames[0].height()
    }

    pub fn intrinsics(&self) -> &Intrinsics {
        &self.frames[0].intrinsics
    }

    /// Consecutive frames `start..start + len`.
    pub fn window(&self, start: usize, len: usize) -> Result<FrameSequence> {
        if len == 0 || start + len > self.len() {
            return Err(Error::invalid(format!(
                "window {start}..{} outside a sequence of {} frames",
                start + len,
                self.len()
            )));
        }
        Ok(Self {
            frames: self.frames[start..start + len].to_vec(),
        })
    }

    /// Same frames with every prediction replaced by `f(frame_index, prediction)`.
    pub fn map_predictions(&self, mut f: impl FnMut(usize, &DepthMap) -> Result<DepthMap>) -> Result<FrameSequence> {
        let frames = self
            .frames
            .iter()
            .enumerate()
            .map(|(i, s)| {
                Ok(FrameSample {
                    pred_depth: f(i, &s.pred_depth)?,
                    ..s.clone()
                })
            })
            .collect::<Result<Vec<_>>>()?;
        FrameSequence::new(frames)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(w: usize, h: usize) -> FrameSample {
        FrameSample {
            image: ImageGrid::constant(w, h, 3, 0.5).unwrap(),
            pred_depth: DepthMap::constant(w, h, 2.0).unwrap(),
            gt_depth: DepthMap::constant(w, h, 2.0).unwrap(),
            gt_pose: Pose::identity(),
            pred_pose: None,
            intrinsics: Intrinsics::centered(4.0, w, h).unwrap(),
        }
    }

    #[test]
    fn validates_frames() {
        assert!(matches!(FrameSequence::new(vec![]), Err(Error::EmptyDomain(_))));
        let seq = FrameSequence::new(vec![sample(4, 3), sample(4, 3)]).unwrap();
        assert_eq!((seq.len(), seq.width(), seq.height()), (2, 4, 3));
        assert!(FrameSequence::new(vec![sample(4, 3), sample(5, 3)]).is_err());
        let mut bad = sample(4, 3);
        bad.gt_depth = DepthMap::constant(3, 3, 1.0).unwrap();
        assert!(FrameSequence::new(vec![bad]).is_err());
        let mut other_k = sample(4, 3);
        other_k.intrinsics = Intrinsics::centered(5.0, 4, 3).unwrap();
        assert!(FrameSequence::new(vec![sample(4, 3), other_k]).is_err());
        assert!(seq.window(1, 2).is_err());
        assert_eq!(seq.window(1, 1).unwrap().len(), 1);
    }
}
