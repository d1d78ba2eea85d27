//! Ready-made scenes. All of them sit in front of the identity camera looking down +z.

use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;

use super::scene::{Primitive, SceneSpec};
use super::texture::Texture;
use crate::error::{Error, Result};
use crate::geometry::Point3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Two boxes in front of a textured wall.
    Boxes,
    /// A slanted plane with a box in front.
    Tilted,
    /// Ground, two side walls, a parked box and a far wall.
    Street,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Boxes, Preset::Tilted, Preset::Street];

    pub fn scene(self) -> SceneSpec {
        match self {
            Preset::Boxes => boxes(),
            Preset::Tilted => tilted(),
            Preset::Street => street(),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Boxes => "boxes",
            Preset::Tilted => "tilted",
            Preset::Street => "street",
        })
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "boxes" => Ok(Preset::Boxes),
            "tilted" => Ok(Preset::Tilted),
            "street" => Ok(Preset::Street),
            other => Err(Error::invalid(format!(
                "unknown scene '{other}' (expected boxes, tilted or street)"
            ))),
        }
    }
}

fn scene(primitives: Vec<Primitive>, background_depth: f64) -> SceneSpec {
    SceneSpec::new(primitives, background_depth, Texture::new(99, 0.3, 0.7, 0.05))
        .expect("preset scenes are valid")
}

pub fn boxes() -> SceneSpec {
    scene(
        vec![
            Primitive::plane(Point3::new(0.0, 0.0, 12.0), Vector3::z(), Texture::new(11, 0.15, 0.85, 0.3)),
            Primitive::cuboid(
                Point3::new(-2.5, -1.0, 6.0),
                Point3::new(-1.0, 1.2, 7.5),
                Texture::new(12, 0.3, 0.9, 0.6),
            ),
            Primitive::cuboid(
                Point3::new(0.8, -0.5, 4.0),
                Point3::new(2.2, 1.5, 5.0),
                Texture::new(13, 0.1, 0.6, 0.8),
            ),
        ],
        60.0,
    )
}

pub fn tilted() -> SceneSpec {
    scene(
        vec![
            Primitive::plane(
                Point3::new(0.0, 0.0, 9.0),
                Vector3::new(0.5, 0.2, -0.84),
                Texture::new(21, 0.1, 0.9, 0.25),
            ),
            Primitive::cuboid(
                Point3::new(-1.2, 0.0, 4.5),
                Point3::new(-0.2, 1.0, 5.5),
                Texture::new(22, 0.4, 1.0, 0.8),
            ),
        ],
        80.0,
    )
}

pub fn street() -> SceneSpec {
    scene(
        vec![
            Primitive::plane(Point3::new(0.0, 1.5, 0.0), Vector3::y(), Texture::new(31, 0.2, 0.6, 0.1)),
            Primitive::plane(Point3::new(-4.0, 0.0, 0.0), Vector3::x(), Texture::new(32, 0.3, 0.9, 0.2)),
            Primitive::plane(Point3::new(4.0, 0.0, 0.0), Vector3::x(), Texture::new(33, 0.1, 0.7, 0.2)),
            Primitive::cuboid(
                Point3::new(1.5, 0.2, 9.0),
                Point3::new(3.2, 1.5, 13.0),
                Texture::new(34, 0.5, 1.0, 0.5),
            ),
        ],
        40.0,
    )
}

/// A textured wall at `plane_depth` with an axis-aligned box in front of it. The
/// wall and box use disjoint intensity ranges so occluded pixels stand out.
pub fn box_before_plane(box_min: Point3, box_max: Point3, plane_depth: f64) -> Result<SceneSpec> {
    SceneSpec::new(
        vec![
            Primitive::plane(Point3::new(0.0, 0.0, plane_depth), Vector3::z(), Texture::new(41, 0.05, 0.35, 0.4)),
            Primitive::cuboid(box_min, box_max, Texture::new(42, 0.65, 0.95, 2.0)),
        ],
        plane_depth * 4.0,
        Texture::flat(0.5),
    )
}
