//! Temporal consistency metric: how much per-frame predictions of the same surface
//! point disagree once carried into a common reference view.
//!
//! Each reference pixel with ground-truth depth anchors a track. The pixel is lifted
//! with ground-truth depth and followed into every frame of the window with
//! ground-truth poses; there the frame's prediction and ground truth are sampled and
//! both are carried back into the reference camera. A track's deviation is the mean
//! relative gap `|pred − gt| / gt` over its observations.

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::error::{Error, Result};

use crate::geometry::{backproject_unchecked, project_unchecked, sample_depth_pair, DepthMap, Pose};
use crate::numeric::median;
use crate::sequence::{check_frames, FrameSample, FrameSequence};

pub const DEFAULT_OUTLIER_FRACTION: f64 = 0.2;

/// One frame's view of a tracked point, as depths in the reference camera.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub frame: usize,
    pub pred: f64,
    pub gt: f64,
}

impl Observation {
    pub fn deviation(&self) -> f64 {
        (self.pred - self.gt).abs() / self.gt
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PixelTrack {
    pub ref_pixel: (usize, usize),
    pub observations: Vec<Observation>,
}

impl PixelTrack {
    pub fn deviation(&self) -> f64 {
        self.observations.iter().map(Observation::deviation).sum::<f64>() / self.observations.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TcmReport {
    pub k: usize,
    pub abs_err: f64,
    pub sq_err: f64,
    pub rmse: f64,
    pub n_tracks: usize,
    pub outlier_fraction_applied: f64,
}

/// Scales `pred` by `median(gt) / median(pred)` over jointly valid pixels.
pub fn median_scale(pred: &DepthMap, gt: &DepthMap) -> Result<(DepthMap, f64)> {
    let ratio = median_ratio(pred, gt)?;
    Ok((pred.scaled(ratio)?, ratio))
}

fn median_ratio(pred: &DepthMap, gt: &DepthMap) -> Result<f64> {
    if !pred.same_shape(gt) {
        return Err(Error::shape(
            format!("{}x{}", gt.width(), gt.height()),
            format!("{}x{}", pred.width(), pred.height()),
        ));
    }
    let (p, g) = (pred.values().as_slice(), gt.values().as_slice());
    let (pv, gv) = (pred.valid().as_slice(), gt.valid().as_slice());
    let (mut ps, mut gs) = (Vec::new(), Vec::new());
    for i in 0..p.len() {
        if pv[i] && gv[i] {
            ps.push(p[i]);
            gs.push(g[i]);
        }
    }
    if ps.is_empty() {
        return Err(Error::EmptyDomain("no pixel has both predicted and ground-truth depth".into()));
    }
    Ok(median(&gs)? / median(&ps)?)
}

/// Tracks anchored at every reference pixel with ground truth. Frames contribute where
/// the correspondence lands in bounds on valid prediction and ground truth; tracks
/// with fewer than two observations are dropped. Predictions are used as given.
pub fn align_to_reference(seq: &[FrameSample], ref_index: usize) -> Result<Vec<PixelTrack>> {
    align_scaled(seq, ref_index, 1.0)
}

/// Alignment with every predicted depth multiplied by `ratio` as it is read.
fn align_scaled(seq: &[FrameSample], ref_index: usize, ratio: f64) -> Result<Vec<PixelTrack>> {
    visit_tracks(seq, ref_index, ratio, |ref_pixel, obs| PixelTrack {
        ref_pixel,
        observations: obs.to_vec(),
    })
}

/// Follows reference pixels through the frames of a window.
struct Aligner<'a> {
    seq: &'a [FrameSample],
    ref_index: usize,
    ratio: f64,
    to_frame: Vec<Pose>,
    /// Reference-camera z of a point sampled at depth d along a ray is linear in d.
    z_row: Vec<(Vector3<f64>, f64)>,
}

impl<'a> Aligner<'a> {
    fn new(seq: &'a [FrameSample], ref_index: usize, ratio: f64) -> Result<Self> {
        if seq.len() < 2 {
            return Err(Error::invalid(format!("alignment needs at least 2 frames, got {}", seq.len())));
        }
        if ref_index >= seq.len() {
            return Err(Error::invalid(format!("reference index {ref_index} outside {} frames", seq.len())));
        }
        check_frames(seq)?;
        let r = &seq[ref_index];
        let to_frame: Vec<Pose> = seq.iter().map(|f| Pose::relative(&r.gt_pose, &f.gt_pose)).collect();
        let z_row = to_frame
            .iter()
            .map(|p| {
                let back = p.inverse();
                (back.rotation().row(2).transpose(), back.translation().z)
            })
            .collect();
        Ok(Self {
            seq,
            ref_index,
            ratio,
            to_frame,
            z_row,
        })
    }

    fn width(&self) -> usize {
        self.seq[0].width()
    }

    fn height(&self) -> usize {
        self.seq[0].height()
    }

    /// Observations of reference pixel `(u, v)` in frame order; empty without ground truth.
    fn observe(&self, u: usize, v: usize, observations: &mut Vec<Observation>) {
        observations.clear();
        let r = &self.seq[self.ref_index];
        let k = &r.intrinsics;
        let Some(d) = r.gt_depth.get(u, v) else { return };
        let p = backproject_unchecked(k, u as f64, v as f64, d);
        for (fi, frame) in self.seq.iter().enumerate() {
            if fi == self.ref_index {
                if let Some(pred) = r.pred_depth.get(u, v) {
                    observations.push(Observation { frame: fi, pred: pred * self.ratio, gt: d });
                }
                continue;
            }
            let q = self.to_frame[fi].transform(&p);
            if !(q.z > 0.0) {
                continue;
            }
            let (us, vs) = project_unchecked(k, &q);
            let Some((pd, gd)) = sample_depth_pair(&frame.pred_depth, &frame.gt_depth, us, vs) else {
                continue;
            };
            let (row, tz) = &self.z_row[fi];
            let z_per_depth = row.dot(&k.ray(us, vs));
            let (pred, gt) = (z_per_depth * pd * self.ratio + tz, z_per_depth * gd + tz);
            if pred > 0.0 && gt > 0.0 {
                observations.push(Observation { frame: fi, pred, gt });
            }
        }
    }
}

/// Calls `f` on every track's observations, row-major over reference pixels.
fn visit_tracks<T: Send>(
    seq: &[FrameSample],
    ref_index: usize,
    ratio: f64,
    f: impl Fn((usize, usize), &[Observation]) -> T + Sync,
) -> Result<Vec<T>> {
    let al = Aligner::new(seq, ref_index, ratio)?;
    let rows: Vec<Vec<T>> = (0..al.height())
        .into_par_iter()
        .map(|v| {
            let mut buf = Vec::with_capacity(seq.len());
            let mut out = Vec::new();
            for u in 0..al.width() {
                al.observe(u, v, &mut buf);
                if buf.len() >= 2 {
                    out.push(f((u, v), &buf));
                }
            }
            out
        })
        .collect();
    Ok(rows.into_iter().flatten().collect())
}

/// What the aggregation needs from one track.
#[derive(Clone, Copy)]
struct TrackStats {
    deviation: f64,
    sum_sq: f64,
    n_obs: usize,
    last_frame: usize,
}

impl TrackStats {
    fn of(obs: &[Observation]) -> Self {
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for o in obs {
            let d = o.deviation();
            sum += d;
            sum_sq += d * d;
        }
        Self {
            deviation: sum / obs.len() as f64,
            sum_sq,
            n_obs: obs.len(),
            last_frame: obs.iter().map(|o| o.frame).max().unwrap_or(0),
        }
    }
}

/// Drops the `floor(outlier_fraction · n)` tracks with the largest deviation, then
/// reports the mean deviation, the mean squared deviation and the root mean square
/// of the kept tracks' per-observation deviations.
pub fn tcm(tracks: &[PixelTrack], outlier_fraction: f64) -> Result<TcmReport> {
    let mut stats: Vec<TrackStats> = tracks.iter().map(|t| TrackStats::of(&t.observations)).collect();
    aggregate(&mut stats, outlier_fraction)
}

fn aggregate(stats: &mut [TrackStats], outlier_fraction: f64) -> Result<TcmReport> {
    if !(0.0..1.0).contains(&outlier_fraction) {
        return Err(Error::invalid(format!("outlier fraction must be in [0, 1), got {outlier_fraction}")));
    }
    if stats.is_empty() {
        return Err(Error::EmptyDomain("no tracks to evaluate".into()));
    }
    let n_all = stats.len();
    let drop = (outlier_fraction * n_all as f64).floor() as usize;
    let k = stats.iter().map(|s| s.last_frame + 1).max().unwrap_or(0);
    let keep = n_all - drop;
    if keep == 0 {
        return Err(Error::EmptyDomain("every track was filtered as an outlier".into()));
    }
    if drop > 0 {
        // Ties break on track order so the kept set is deterministic.
        let mut order: Vec<usize> = (0..n_all).collect();
        order.select_nth_unstable_by(keep - 1, |&a, &b| {
            stats[a].deviation.total_cmp(&stats[b].deviation).then(a.cmp(&b))
        });
        let mut kept = vec![false; n_all];
        for &i in &order[..keep] {
            kept[i] = true;
        }
        let mut j = 0;
        for i in 0..n_all {
            if kept[i] {
                stats[j] = stats[i];
                j += 1;
            }
        }
    }
    let kept = &stats[..keep];
    let n = keep as f64;
    let abs_err = kept.iter().map(|s| s.deviation).sum::<f64>() / n;
    let sq_err = kept.iter().map(|s| s.deviation * s.deviation).sum::<f64>() / n;
    let sum_sq: f64 = kept.iter().map(|s| s.sum_sq).sum();
    let n_obs: usize = kept.iter().map(|s| s.n_obs).sum();
    Ok(TcmReport {
        k,
        abs_err,
        sq_err,
        rmse: (sum_sq / n_obs as f64).sqrt(),
        n_tracks: keep,
        outlier_fraction_applied: drop as f64 / n_all as f64,
    })
}

/// Median-scales every prediction by the reference frame's ratio, then aligns and reports.
pub fn evaluate_window(window: &[FrameSample], ref_index: usize, outlier_fraction: f64) -> Result<TcmReport> {
    let r = window
        .get(ref_index)
        .ok_or_else(|| Error::invalid(format!("reference index {ref_index} outside {} frames", window.len())))?;
    let ratio = median_ratio(&r.pred_depth, &r.gt_depth)?;
    let mut stats = visit_tracks(window, ref_index, ratio, |_, obs| TrackStats::of(obs))?;
    let mut report = aggregate(&mut stats, outlier_fraction)?;
    report.k = window.len();
    Ok(report)
}

/// Averages window reports over windows of `k` frames starting every `stride` frames,
/// each referenced to its middle frame. `n_tracks` is the total over windows.
pub fn evaluate_sequence(seq: &FrameSequence, k: usize, outlier_fraction: f64, stride: usize) -> Result<TcmReport> {
    Ok(evaluate_sequence_multi(seq, &[k], outlier_fraction, stride)?[0])
}

/// [`evaluate_sequence`] for several window sizes at once. Windows sharing a
/// reference frame reuse its alignment, so this is cheaper than separate calls.
pub fn evaluate_sequence_multi(
    seq: &FrameSequence,
    ks: &[usize],
    outlier_fraction: f64,
    stride: usize,
) -> Result<Vec<TcmReport>> {
    if stride == 0 {
        return Err(Error::invalid("stride must be at least 1"));
    }
    for &k in ks {
        if k < 2 {
            return Err(Error::invalid(format!("window size must be at least 2, got {k}")));
        }
        if k > seq.len() {
            return Err(Error::invalid(format!("window of {k} frames exceeds a sequence of {}", seq.len())));
        }
    }
    // Windows as (k slot, start), grouped by reference frame.
    let mut by_ref: Vec<Vec<(usize, usize)>> = vec![Vec::new(); seq.len()];
    for (slot, &k) in ks.iter().enumerate() {
        for start in (0..=seq.len() - k).step_by(stride) {
            by_ref[start + k / 2].push((slot, start));
        }
    }
    let mut reports: Vec<Vec<TcmReport>> = vec![Vec::new(); ks.len()];
    for (r, windows) in by_ref.iter().enumerate() {
        if windows.is_empty() {
            continue;
        }
        let lo = windows.iter().map(|&(_, s)| s).min().unwrap();
        let hi = windows.iter().map(|&(slot, s)| s + ks[slot]).max().unwrap();
        let frames = &seq.frames()[lo..hi];
        let reference = &frames[r - lo];
        let ratio = median_ratio(&reference.pred_depth, &reference.gt_depth)?;
        let al = Aligner::new(frames, r - lo, ratio)?;
        // Frame ranges of the windows, relative to `frames`.
        let ranges: Vec<(usize, usize)> = windows.iter().map(|&(slot, s)| (s - lo, s - lo + ks[slot])).collect();
        let rows: Vec<Vec<Vec<TrackStats>>> = (0..al.height())
            .into_par_iter()
            .map(|v| {
                let mut buf = Vec::with_capacity(frames.len());
                let mut out = vec![Vec::new(); ranges.len()];
                for u in 0..al.width() {
                    al.observe(u, v, &mut buf);
                    for (o, &(a, b)) in out.iter_mut().zip(&ranges) {
                        // Observations are in frame order, so a window's share is contiguous.
                        let i = buf.partition_point(|x| x.frame < a);
                        let j = buf.partition_point(|x| x.frame < b);
                        if j - i >= 2 {
                            o.push(TrackStats::of(&buf[i..j]));
                        }
                    }
                }
                out
            })
            .collect();
        for (wi, &(slot, _)) in windows.iter().enumerate() {
            let mut stats: Vec<TrackStats> = rows.iter().flat_map(|row| row[wi].iter().copied()).collect();
            let mut report = aggregate(&mut stats, outlier_fraction)?;
            report.k = ks[slot];
            reports[slot].push(report);
        }
    }
    // Windows were visited by reference frame, which is also start order within a k.
    Ok(ks
        .iter()
        .zip(reports)
        .map(|(&k, rs)| {
            let n = rs.len() as f64;
            let mean = |f: fn(&TcmReport) -> f64| rs.iter().map(f).sum::<f64>() / n;
            TcmReport {
                k,
                abs_err: mean(|r| r.abs_err),
                sq_err: mean(|r| r.sq_err),
                rmse: mean(|r| r.rmse),
                n_tracks: rs.iter().map(|r| r.n_tracks).sum(),
                outlier_fraction_applied: mean(|r| r.outlier_fraction_applied),
            }
        })
        .collect())
}
