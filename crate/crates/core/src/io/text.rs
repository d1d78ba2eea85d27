//! Pose lists and intrinsics as whitespace-separated text.
//!
//! Floats are written with the shortest representation that parses back to the
//! same value, so write then read is exact.

use std::path::Path;

use nalgebra::{Matrix3, Vector3};

use super::{read_text, write_bytes};
use crate::error::{Error, Result};
use crate::geometry::{rotation_error, Intrinsics, Pose, ROTATION_TOLERANCE};

/// Rotations further than this from orthonormal are rejected; closer ones are
/// projected onto SO(3).
pub const POSE_REJECT_TOLERANCE: f64 = 1e-3;

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn floats(s: &str, path: &Path, line: usize) -> Result<Vec<f64>> {
    s.split_whitespace()
        .map(|t| match t.parse::<f64>() {
            Ok(x) if x.is_finite() => Ok(x),
            _ => Err(parse_err(path, line, format!("'{t}' is not a finite number"))),
        })
        .collect()
}

/// One pose per non-empty line: 12 reals, the row-major 3×4 `[R | t]` of a
/// camera-to-world transform.
pub fn parse_poses(text: &str, path: &Path) -> Result<Vec<Pose>> {
    let mut poses = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let v = floats(line, path, n)?;
        if v.len() != 12 {
            return Err(parse_err(path, n, format!("expected 12 values, found {}", v.len())));
        }
        let r = Matrix3::new(v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10]);
        let t = Vector3::new(v[3], v[7], v[11]);
        let err = rotation_error(&r);
        let pose = if err <= ROTATION_TOLERANCE {
            Pose::new(r, t)
        } else if err <= POSE_REJECT_TOLERANCE {
            Pose::orthonormalized(&r, t)
        } else {
            return Err(parse_err(path, n, format!("rotation is not orthonormal (deviation {err:.3e})")));
        };
        poses.push(pose.map_err(|e| parse_err(path, n, e.to_string()))?);
    }
    Ok(poses)
}

pub fn format_poses(poses: &[Pose]) -> String {
    let mut out = String::new();
    for p in poses {
        let (r, t) = (p.rotation(), p.translation());
        let row = |i: usize| format!("{} {} {} {}", r[(i, 0)], r[(i, 1)], r[(i, 2)], t[i]);
        out.push_str(&format!("{} {} {}\n", row(0), row(1), row(2)));
    }
    out
}

pub fn read_poses(path: impl AsRef<Path>) -> Result<Vec<Pose>> {
    let path = path.as_ref();
    parse_poses(&read_text(path)?, path)
}

pub fn write_poses(path: impl AsRef<Path>, poses: &[Pose]) -> Result<()> {
    write_bytes(path.as_ref(), format_poses(poses).as_bytes())
}

/// `fx fy cx cy` on one line.
pub fn parse_intrinsics(text: &str, path: &Path) -> Result<Intrinsics> {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l))
        .collect();
    let &[(n, line)] = lines.as_slice() else {
        return Err(parse_err(path, lines.get(1).map_or(1, |l| l.0), "expected exactly one line 'fx fy cx cy'"));
    };
    let v = floats(line, path, n)?;
    if v.len() != 4 {
        return Err(parse_err(path, n, format!("expected 4 values, found {}", v.len())));
    }
    Intrinsics::new(v[0], v[1], v[2], v[3]).map_err(|e| parse_err(path, n, e.to_string()))
}

pub fn format_intrinsics(k: &Intrinsics) -> String {
    format!("{} {} {} {}\n", k.fx, k.fy, k.cx, k.cy)
}

pub fn read_intrinsics(path: impl AsRef<Path>) -> Result<Intrinsics> {
    let path = path.as_ref();
    parse_intrinsics(&read_text(path)?, path)
}

pub fn write_intrinsics(path: impl AsRef<Path>, k: &Intrinsics) -> Result<()> {
    write_bytes(path.as_ref(), format_intrinsics(k).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("poses.txt")
    }

    #[test]
    fn pose_lines() {
        let poses = parse_poses("1 0 0 0 0 1 0 0 0 0 1 0\n\n1 0 0 1.5 0 1 0 -2 0 0 1 3\n", p()).unwrap();
        assert_eq!(poses[0], Pose::identity());
        assert_eq!(poses[1], Pose::from_translation(Vector3::new(1.5, -2.0, 3.0)));
        match parse_poses("1 0 0 0 0 1 0 0 0 0 1 0\n1 0 0 0 0 1 0 0 0 0 1\n", p()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(parse_poses("2 0 0 0 0 1 0 0 0 0 1 0\n", p()).is_err());
        assert!(parse_poses("1 0 0 0 0 1 0 0 0 0 1 nan\n", p()).is_err());
        // Slightly off rotations are repaired.
        let q = parse_poses("1.0001 0 0 0 0 1 0 0 0 0 1 0\n", p()).unwrap();
        assert!(q[0].rotation_error() < 1e-12);
    }

    #[test]
    fn pose_text_round_trip_is_exact() {
        let a = Pose::from_axis_angle(Vector3::new(0.3, -1.0, 0.2), 0.7, Vector3::new(0.1, 1.0 / 3.0, -7.25));
        let back = parse_poses(&format_poses(&[a, Pose::identity()]), p()).unwrap();
        assert_eq!(back, vec![a, Pose::identity()]);
    }

    #[test]
    fn intrinsics_record() {
        let k = parse_intrinsics("721.5377 721.5377 609.5593 172.854\n", p()).unwrap();
        assert_eq!((k.fx, k.fy, k.cx, k.cy), (721.5377, 721.5377, 609.5593, 172.854));
        assert_eq!(parse_intrinsics(&format_intrinsics(&k), p()).unwrap(), k);
        assert!(parse_intrinsics("1 2 3\n", p()).is_err());
        assert!(parse_intrinsics("1 1 0 0\n1 1 0 0\n", p()).is_err());
        assert!(parse_intrinsics("-1 1 0 0\n", p()).is_err());
    }
}
