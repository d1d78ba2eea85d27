//! Sequence manifests.
//!
//! ```text
//! consdepth-manifest 1
//! resolution <width> <height>
//! intrinsics <path>
//! poses <path>
//! pred_poses <path>            (optional)
//! frame <index> <image> <pred_depth> <gt_depth> <pose_index>
//! ...
//! ```
//!
//! Paths are relative to the manifest's directory and may not contain whitespace.
//! `pose_index` is the 0-based entry in the pose files. Frame indices strictly
//! increase. Blank lines and lines starting with `#` are ignored.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::pfm::{read_pfm_depth, read_pfm_image, write_pfm_depth};
use super::raster::{read_depth_png16, read_image_png, write_image_png, PNG16_DEPTH_DIVISOR};
use super::text::{read_intrinsics, read_poses, write_intrinsics, write_poses};
use super::{read_text, write_bytes};
use crate::error::{Error, Result};
use crate::geometry::{DepthMap, ImageGrid};
use crate::sequence::{FrameSample, FrameSequence};

pub const MANIFEST_HEADER: &str = "consdepth-manifest 1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameRecord {
    pub index: usize,
    pub image: PathBuf,
    pub pred_depth: PathBuf,
    pub gt_depth: PathBuf,
    pub pose_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub width: usize,
    pub height: usize,
    pub intrinsics: PathBuf,
    pub poses: PathBuf,
    pub pred_poses: Option<PathBuf>,
    pub frames: Vec<FrameRecord>,
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

pub fn parse_manifest(text: &str, path: &Path) -> Result<Manifest> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    match lines.next() {
        Some((_, MANIFEST_HEADER)) => {}
        Some((n, other)) => return Err(parse_err(path, n, format!("expected header '{MANIFEST_HEADER}', found '{other}'"))),
        None => return Err(Error::EmptyDomain(format!("{}: manifest is empty", path.display()))),
    }
    let mut resolution = None;
    let (mut intrinsics, mut poses, mut pred_poses) = (None, None, None);
    let mut frames: Vec<FrameRecord> = Vec::new();
    for (n, line) in lines {
        let tok: Vec<&str> = line.split_whitespace().collect();
        let arity = |want: usize| -> Result<()> {
            if tok.len() != want + 1 {
                return Err(parse_err(path, n, format!("'{}' takes {want} fields, found {}", tok[0], tok.len() - 1)));
            }
            Ok(())
        };
        let int = |s: &str, what: &str| -> Result<usize> {
            s.parse::<usize>()
                .map_err(|_| parse_err(path, n, format!("{what} '{s}' is not a non-negative integer")))
        };
        let once = |slot: &Option<PathBuf>| -> Result<PathBuf> {
            if slot.is_some() {
                return Err(parse_err(path, n, format!("duplicate '{}'", tok[0])));
            }
            Ok(PathBuf::from(tok[1]))
        };
        match tok[0] {
            "resolution" => {
                arity(2)?;
                if resolution.is_some() {
                    return Err(parse_err(path, n, "duplicate 'resolution'"));
                }
                let (w, h) = (int(tok[1], "width")?, int(tok[2], "height")?);
                if w == 0 || h == 0 {
                    return Err(parse_err(path, n, "resolution must be positive"));
                }
                resolution = Some((w, h));
            }
            "intrinsics" => {
                arity(1)?;
                intrinsics = Some(once(&intrinsics)?);
            }
            "poses" => {
                arity(1)?;
                poses = Some(once(&poses)?);
            }
            "pred_poses" => {
                arity(1)?;
                pred_poses = Some(once(&pred_poses)?);
            }
            "frame" => {
                arity(5)?;
                let index = int(tok[1], "frame index")?;
                if let Some(prev) = frames.last() {
                    if index <= prev.index {
                        return Err(parse_err(path, n, format!("frame index {index} does not increase (previous {})", prev.index)));
                    }
                }
                frames.push(FrameRecord {
                    index,
                    image: tok[2].into(),
                    pred_depth: tok[3].into(),
                    gt_depth: tok[4].into(),
                    pose_index: int(tok[5], "pose index")?,
                });
            }
            other => return Err(parse_err(path, n, format!("unknown record '{other}'"))),
        }
    }
    let missing = |what: &str| parse_err(path, text.lines().count().max(1), format!("missing '{what}' record"));
    let (width, height) = resolution.ok_or_else(|| missing("resolution"))?;
    Ok(Manifest {
        width,
        height,
        intrinsics: intrinsics.ok_or_else(|| missing("intrinsics"))?,
        poses: poses.ok_or_else(|| missing("poses"))?,
        pred_poses,
        frames,
    })
}

fn path_field(p: &Path) -> Result<&str> {
    match p.to_str() {
        Some(s) if !s.is_empty() && !s.chars().any(char::is_whitespace) => Ok(s),
        _ => Err(Error::invalid(format!("manifest path '{}' is empty, not UTF-8 or contains whitespace", p.display()))),
    }
}

/// Canonical text: header, resolution, intrinsics, poses, pred_poses, then frames.
pub fn format_manifest(m: &Manifest) -> Result<String> {
    let mut out = format!("{MANIFEST_HEADER}\nresolution {} {}\n", m.width, m.height);
    writeln!(out, "intrinsics {}", path_field(&m.intrinsics)?).unwrap();
    writeln!(out, "poses {}", path_field(&m.poses)?).unwrap();
    if let Some(p) = &m.pred_poses {
        writeln!(out, "pred_poses {}", path_field(p)?).unwrap();
    }
    let mut prev = None;
    for f in &m.frames {
        if prev.is_some_and(|p| f.index <= p) {
            return Err(Error::invalid(format!("frame index {} does not increase", f.index)));
        }
        prev = Some(f.index);
        writeln!(
            out,
            "frame {} {} {} {} {}",
            f.index,
            path_field(&f.image)?,
            path_field(&f.pred_depth)?,
            path_field(&f.gt_depth)?,
            f.pose_index
        )
        .unwrap();
    }
    Ok(out)
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    parse_manifest(&read_text(path)?, path)
}

pub fn write_manifest(path: impl AsRef<Path>, m: &Manifest) -> Result<()> {
    write_bytes(path.as_ref(), format_manifest(m)?.as_bytes())
}

fn extension(p: &Path) -> String {
    p.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase()
}

/// Depth from `.pfm` or 16-bit `.png` (divisor 256).
pub fn read_depth(path: &Path) -> Result<DepthMap> {
    match extension(path).as_str() {
        "pfm" => read_pfm_depth(path),
        "png" => read_depth_png16(path, PNG16_DEPTH_DIVISOR),
        _ => Err(Error::invalid(format!("{}: depth must be .pfm or .png", path.display()))),
    }
}

/// Image from 8-bit `.png` or `.pfm`.
pub fn read_image(path: &Path) -> Result<ImageGrid> {
    match extension(path).as_str() {
        "png" => read_image_png(path),
        "pfm" => read_pfm_image(path),
        _ => Err(Error::invalid(format!("{}: image must be .png or .pfm", path.display()))),
    }
}

/// Reads the manifest and every file it references into a validated sequence.
/// Problems with a frame's files are reported as load errors naming that frame.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<FrameSequence> {
    let path = path.as_ref();
    let m = read_manifest(path)?;
    if m.frames.is_empty() {
        return Err(Error::EmptyDomain(format!("{}: sequence has no frames", path.display())));
    }
    let dir = path.parent().unwrap_or(Path::new(""));
    let k = read_intrinsics(dir.join(&m.intrinsics))?;
    let poses = read_poses(dir.join(&m.poses))?;
    let pred_poses = m.pred_poses.as_ref().map(|p| read_poses(dir.join(p))).transpose()?;
    let mut frames = Vec::with_capacity(m.frames.len());
    for rec in &m.frames {
        let load = |message: String| Error::Load {
            frame: Some(rec.index),
            message,
        };
        let shape = |what: &str, p: &Path, w: usize, h: usize| -> Result<()> {
            if (w, h) != (m.width, m.height) {
                return Err(load(format!(
                    "{what} {} is {w}x{h}, manifest declares {}x{}",
                    p.display(),
                    m.width,
                    m.height
                )));
            }
            Ok(())
        };
        let image_path = dir.join(&rec.image);
        let image = read_image(&image_path).map_err(|e| load(e.to_string()))?;
        shape("image", &image_path, image.width(), image.height())?;
        let depth = |rel: &Path, what: &str| -> Result<DepthMap> {
            let p = dir.join(rel);
            let d = read_depth(&p).map_err(|e| load(e.to_string()))?;
            shape(what, &p, d.width(), d.height())?;
            Ok(d)
        };
        let pred_depth = depth(&rec.pred_depth, "predicted depth")?;
        let gt_depth = depth(&rec.gt_depth, "ground-truth depth")?;
        let pose_at = |list: &[crate::geometry::Pose], what: &str| {
            list.get(rec.pose_index).copied().ok_or_else(|| {
                load(format!("pose index {} but the {what} file has {} entries", rec.pose_index, list.len()))
            })
        };
        let gt_pose = pose_at(&poses, "poses")?;
        let pred_pose = pred_poses.as_deref().map(|p| pose_at(p, "pred_poses")).transpose()?;
        frames.push(FrameSample {
            image,
            pred_depth,
            gt_depth,
            gt_pose,
            pred_pose,
            intrinsics: k,
        });
    }
    FrameSequence::new(frames).map_err(|e| Error::Load {
        frame: None,
        message: e.to_string(),
    })
}

/// Writes every frame (PNG images, PFM depth), the pose and intrinsics files and a
/// manifest into `dir`, returning the manifest path. Predicted poses are written
/// when every frame has one.
pub fn save_sequence(dir: impl AsRef<Path>, seq: &FrameSequence) -> Result<PathBuf> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut m = Manifest {
        width: seq.width(),
        height: seq.height(),
        intrinsics: "intrinsics.txt".into(),
        poses: "poses.txt".into(),
        pred_poses: None,
        frames: Vec::with_capacity(seq.len()),
    };
    write_intrinsics(dir.join(&m.intrinsics), seq.intrinsics())?;
    let gt: Vec<_> = seq.frames().iter().map(|f| f.gt_pose).collect();
    write_poses(dir.join(&m.poses), &gt)?;
    if let Some(pred) = seq.frames().iter().map(|f| f.pred_pose).collect::<Option<Vec<_>>>() {
        let p = PathBuf::from("pred_poses.txt");
        write_poses(dir.join(&p), &pred)?;
        m.pred_poses = Some(p);
    }
    for (i, f) in seq.frames().iter().enumerate() {
        let rec = FrameRecord {
            index: i,
            image: format!("image_{i:04}.png").into(),
            pred_depth: format!("pred_{i:04}.pfm").into(),
            gt_depth: format!("gt_{i:04}.pfm").into(),
            pose_index: i,
        };
        write_image_png(dir.join(&rec.image), &f.image)?;
        write_pfm_depth(dir.join(&rec.pred_depth), &f.pred_depth)?;
        write_pfm_depth(dir.join(&rec.gt_depth), &f.gt_depth)?;
        m.frames.push(rec);
    }
    let path = dir.join("manifest.txt");
    write_manifest(&path, &m)?;
    Ok(path)
}
