//! Planes and axis-aligned boxes with analytic ray casting and rendering.

use nalgebra::Vector3;
use rayon::prelude::*;

use super::texture::Texture;
use crate::error::{Error, Result};
use crate::geometry::{DepthMap, Grid, ImageGrid, Intrinsics, Point3, Pose};

/// Rays closer than this to the camera center do not count as hits.
const MIN_HIT: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    /// Infinite double-sided plane through `point` with unit `normal`.
    Plane { point: Point3, normal: Vector3<f64> },
    /// Axis-aligned box in world coordinates.
    Box { min: Point3, max: Point3 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Primitive {
    pub shape: Shape,
    pub texture: Texture,
}

impl Primitive {
    pub fn plane(point: Point3, normal: Vector3<f64>, texture: Texture) -> Self {
        Self {
            shape: Shape::Plane {
                point,
                normal: normal.normalize(),
            },
            texture,
        }
    }

    pub fn cuboid(min: Point3, max: Point3, texture: Texture) -> Self {
        Self {
            shape: Shape::Box { min, max },
            texture,
        }
    }

    /// Distance from `p` to the primitive's surface.
    pub fn surface_distance(&self, p: &Point3) -> f64 {
        match self.shape {
            Shape::Plane { point, normal } => normal.dot(&(p - point)).abs(),
            Shape::Box { min, max } => {
                let outside = Vector3::new(
                    (min.x - p.x).max(p.x - max.x).max(0.0),
                    (min.y - p.y).max(p.y - max.y).max(0.0),
                    (min.z - p.z).max(p.z - max.z).max(0.0),
                );
                if outside.norm() > 0.0 {
                    outside.norm()
                } else {
                    let dx = (p.x - min.x).min(max.x - p.x);
                    let dy = (p.y - min.y).min(max.y - p.y);
                    let dz = (p.z - min.z).min(max.z - p.z);
                    dx.min(dy).min(dz)
                }
            }
        }
    }

    /// Nearest intersection parameter along `origin + t·dir` and the face hit.
    fn intersect(&self, origin: &Point3, dir: &Vector3<f64>) -> Option<(f64, u8)> {
        match self.shape {
            Shape::Plane { point, normal } => {
                let denom = normal.dot(dir);
                if denom.abs() < 1e-15 {
                    return None;
                }
                let t = normal.dot(&(point - origin)) / denom;
                (t > MIN_HIT).then_some((t, 0))
            }
            Shape::Box { min, max } => {
                let mut t_near = f64::NEG_INFINITY;
                let mut t_far = f64::INFINITY;
                let mut near_face = 0u8;
                let mut far_face = 0u8;
                for axis in 0..3 {
                    let (o, d) = (origin[axis], dir[axis]);
                    if d == 0.0 {
                        if o < min[axis] || o > max[axis] {
                            return None;
                        }
                        continue;
                    }
                    let (mut t0, mut t1) = ((min[axis] - o) / d, (max[axis] - o) / d);
                    // Face ids: 2·axis for the min side, 2·axis + 1 for the max side.
                    let (mut f0, mut f1) = (2 * axis as u8, 2 * axis as u8 + 1);
                    if t0 > t1 {
                        std::mem::swap(&mut t0, &mut t1);
                        std::mem::swap(&mut f0, &mut f1);
                    }
                    if t0 > t_near {
                        t_near = t0;
                        near_face = f0;
                    }
                    if t1 < t_far {
                        t_far = t1;
                        far_face = f1;
                    }
                }
                if t_near > t_far || t_far <= MIN_HIT {
                    None
                } else if t_near > MIN_HIT {
                    Some((t_near, near_face))
                } else {
                    Some((t_far, far_face))
                }
            }
        }
    }

    /// Surface coordinates of a point on face `face`.
    fn surface_coords(&self, p: &Point3, face: u8) -> (f64, f64) {
        match self.shape {
            Shape::Plane { point, normal } => {
                let helper = if normal.y.abs() < 0.9 { Vector3::y() } else { Vector3::x() };
                let e1 = normal.cross(&helper).normalize();
                let e2 = normal.cross(&e1);
                let d = p - point;
                (d.dot(&e1), d.dot(&e2))
            }
            Shape::Box { .. } => match face / 2 {
                0 => (p.z, p.y),
                1 => (p.x, p.z),
                _ => (p.x, p.y),
            },
        }
    }
}

/// A static scene. Rays that miss every primitive fall through to a world plane
/// at `z = background_depth`, and to that depth if they miss it too.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub primitives: Vec<Primitive>,
    pub background_depth: f64,
    pub background_texture: Texture,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    /// Ray parameter; equals camera-frame depth for rays with unit z.
    pub t: f64,
    /// Primitive index; `primitives.len()` is the background.
    pub primitive: usize,
    pub face: u8,
    pub point: Point3,
}

impl Hit {
    /// Id that changes across primitives and box faces.
    pub fn surface_id(&self) -> u32 {
        self.primitive as u32 * 8 + self.face as u32
    }
}

/// Rendered view of a scene.
#[derive(Debug, Clone, PartialEq)]
pub struct Render {
    pub depth: DepthMap,
    pub image: ImageGrid,
    /// Surface id per pixel, see [`Hit::surface_id`].
    pub ids: Grid<u32>,
}

pub const CHANNELS: usize = 3;

impl SceneSpec {
    pub fn new(primitives: Vec<Primitive>, background_depth: f64, background_texture: Texture) -> Result<Self> {
        let s = Self {
            primitives,
            background_depth,
            background_texture,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.background_depth.is_finite() && self.background_depth > 0.0) {
            return Err(Error::invalid("background depth must be > 0"));
        }
        if !self.background_texture.is_valid() {
            return Err(Error::invalid("background texture range must lie in [0, 1]"));
        }
        for (i, p) in self.primitives.iter().enumerate() {
            if !p.texture.is_valid() {
                return Err(Error::invalid(format!("primitive {i}: texture range must lie in [0, 1]")));
            }
            match p.shape {
                Shape::Plane { normal, point } => {
                    if !(normal.norm() > 0.0 && point.coords.iter().all(|x| x.is_finite())) {
                        return Err(Error::invalid(format!("primitive {i}: degenerate plane")));
                    }
                }
                Shape::Box { min, max } => {
                    if !(0..3).all(|a| min[a] < max[a]) {
                        return Err(Error::invalid(format!("primitive {i}: box min must be < max")));
                    }
                }
            }
        }
        Ok(())
    }

    fn background(&self) -> Primitive {
        Primitive::plane(
            Point3::new(0.0, 0.0, self.background_depth),
            -Vector3::z(),
            self.background_texture,
        )
    }

    /// Nearest hit along a world-space ray, background included.
    pub fn cast(&self, origin: &Point3, dir: &Vector3<f64>) -> Option<Hit> {
        let mut best: Option<Hit> = None;
        let bg = self.background();
        let all = self.primitives.iter().chain(std::iter::once(&bg));
        for (i, prim) in all.enumerate() {
            if let Some((t, face)) = prim.intersect(origin, dir) {
                if best.is_none_or(|b| t < b.t) {
                    best = Some(Hit {
                        t,
                        primitive: i,
                        face,
                        point: origin + dir * t,
                    });
                }
            }
        }
        best
    }

    /// Hit seen through pixel `(u, v)` of a camera with camera-to-world pose `c2w`.
    pub fn cast_pixel(&self, c2w: &Pose, k: &Intrinsics, u: f64, v: f64) -> Option<Hit> {
        let origin = Point3::from(*c2w.translation());
        self.cast(&origin, &c2w.rotate(&k.ray(u, v)))
    }

    fn primitive(&self, i: usize) -> Primitive {
        self.primitives.get(i).copied().unwrap_or_else(|| self.background())
    }

    /// Color of channel `c` at a hit.
    pub fn shade(&self, hit: &Hit, c: usize) -> f64 {
        let prim = self.primitive(hit.primitive);
        let (s, t) = prim.surface_coords(&hit.point, hit.face);
        prim.texture.sample(s, t, c)
    }

    /// Distance from a world point to the nearest scene surface, background included.
    pub fn surface_residual(&self, p: &Point3) -> f64 {
        let bg = self.background();
        self.primitives
            .iter()
            .chain(std::iter::once(&bg))
            .map(|prim| prim.surface_distance(p))
            .fold(f64::INFINITY, f64::min)
    }

    /// Renders depth, color and surface ids. Pixels that hit nothing get the
    /// background depth, a mid-gray color and id `u32::MAX`.
    pub fn render(&self, c2w: &Pose, k: &Intrinsics, width: usize, height: usize) -> Result<Render> {
        self.validate()?;
        let texels: Vec<(f64, [f64; CHANNELS], u32)> = (0..width * height)
            .into_par_iter()
            .map(|i| {
                let (u, v) = ((i % width) as f64, (i / width) as f64);
                match self.cast_pixel(c2w, k, u, v) {
                    Some(hit) => {
                        let mut rgb = [0.0; CHANNELS];
                        for (c, x) in rgb.iter_mut().enumerate() {
                            *x = self.shade(&hit, c);
                        }
                        (hit.t, rgb, hit.surface_id())
                    }
                    None => (self.background_depth, [0.5; CHANNELS], u32::MAX),
                }
            })
            .collect();
        let depth = DepthMap::from_values(width, height, texels.iter().map(|t| t.0).collect())?;
        let image = ImageGrid::new(
            width,
            height,
            CHANNELS,
            texels.iter().flat_map(|t| t.1).collect(),
        )?;
        let ids = Grid::from_vec(width, height, texels.iter().map(|t| t.2).collect())?;
        Ok(Render { depth, image, ids })
    }
}

/// Depth map of `scene` seen from camera-to-world pose `c2w`.
pub fn render_depth(scene: &SceneSpec, c2w: &Pose, k: &Intrinsics, width: usize, height: usize) -> Result<DepthMap> {
    Ok(scene.render(c2w, k, width, height)?.depth)
}

/// Color image of `scene` seen from camera-to-world pose `c2w`.
pub fn render_image(scene: &SceneSpec, c2w: &Pose, k: &Intrinsics, width: usize, height: usize) -> Result<ImageGrid> {
    Ok(scene.render(c2w, k, width, height)?.image)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::backproject;
    use std::f64::consts::FRAC_PI_4;

    fn plane_at(z: f64) -> SceneSpec {
        SceneSpec::new(
            vec![Primitive::plane(Point3::new(0.0, 0.0, z), Vector3::z(), Texture::new(1, 0.2, 0.8, 1.0))],
            100.0,
            Texture::flat(0.5),
        )
        .unwrap()
    }

    #[test]
    fn fronto_plane_depths() {
        let k = Intrinsics::centered(10.0, 9, 7).unwrap();
        let d = render_depth(&plane_at(5.0), &Pose::identity(), &k, 9, 7).unwrap();
        assert!(d.values().iter().all(|&x| x == 5.0));
        let moved = Pose::from_translation(Vector3::new(0.0, 0.0, 1.0));
        let d = render_depth(&plane_at(5.0), &moved, &k, 9, 7).unwrap();
        assert!(d.values().iter().all(|&x| (x - 4.0).abs() < 1e-12));
    }

    #[test]
    fn tilted_plane_satisfies_plane_equation() {
        let normal = Vector3::new(FRAC_PI_4.sin(), 0.0, -FRAC_PI_4.cos());
        let point = Point3::new(0.0, 0.0, 5.0);
        let scene = SceneSpec::new(
            vec![Primitive::plane(point, normal, Texture::flat(0.3))],
            1000.0,
            Texture::flat(0.5),
        )
        .unwrap();
        let (w, h) = (16, 12);
        let k = Intrinsics::centered(12.0, w, h).unwrap();
        let d = render_depth(&scene, &Pose::identity(), &k, w, h).unwrap();
        for v in 0..h {
            for u in 0..w {
                let p = backproject(&k, (u as f64, v as f64), d.get(u, v).unwrap()).unwrap();
                assert!(normal.normalize().dot(&(p - point)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn box_in_front_of_plane() {
        let scene = SceneSpec::new(
            vec![
                Primitive::plane(Point3::new(0.0, 0.0, 6.0), Vector3::z(), Texture::flat(0.2)),
                Primitive::cuboid(Point3::new(-0.5, -0.5, 2.0), Point3::new(0.5, 0.5, 3.0), Texture::flat(0.9)),
            ],
            50.0,
            Texture::flat(0.5),
        )
        .unwrap();
        let k = Intrinsics::centered(8.0, 17, 17).unwrap();
        let r = scene.render(&Pose::identity(), &k, 17, 17).unwrap();
        assert_eq!(r.depth.get(8, 8), Some(2.0));
        assert_eq!(r.image.get(8, 8, 0), 0.9);
        assert_eq!(r.depth.get(0, 0), Some(6.0));
        assert_ne!(r.ids.get(8, 8), r.ids.get(0, 0));
        // Front face is the min-z side of the box.
        assert_eq!(*r.ids.get(8, 8), 8 + 4);
        let inside = Point3::new(0.0, 0.0, 2.1);
        assert!((scene.primitives[1].surface_distance(&inside) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn misses_fall_back_to_background() {
        let scene = SceneSpec::new(vec![], 30.0, Texture::flat(0.1)).unwrap();
        let k = Intrinsics::centered(4.0, 5, 5).unwrap();
        let r = scene.render(&Pose::identity(), &k, 5, 5).unwrap();
        assert!(r.depth.values().iter().all(|&x| (x - 30.0).abs() < 1e-12));
        // Looking backwards misses the background plane entirely.
        let back = Pose::yaw(std::f64::consts::PI);
        let r = scene.render(&back, &k, 5, 5).unwrap();
        assert!(r.depth.values().iter().all(|&x| x == 30.0));
        assert!(r.ids.iter().all(|&i| i == u32::MAX));
    }

    #[test]
    fn view_independent_color() {
        let scene = plane_at(4.0);
        let (w, h) = (20, 10);
        let k = Intrinsics::centered(15.0, w, h).unwrap();
        let a = scene.render(&Pose::identity(), &k, w, h).unwrap();
        let b = scene.render(&Pose::from_translation(Vector3::new(0.0, 0.0, 0.0)), &k, w, h).unwrap();
        assert_eq!(a, b);
        let hit = scene.cast_pixel(&Pose::identity(), &k, 3.0, 4.0).unwrap();
        let other = Pose::from_translation(Vector3::new(0.4, 0.1, -0.5));
        let local = other.inverse().transform(&hit.point);
        let (u, v) = (k.fx * local.x / local.z + k.cx, k.fy * local.y / local.z + k.cy);
        let hit2 = scene.cast_pixel(&other, &k, u, v).unwrap();
        for c in 0..3 {
            assert!((scene.shade(&hit, c) - scene.shade(&hit2, c)).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(SceneSpec::new(vec![], 0.0, Texture::flat(0.5)).is_err());
        let bad_box = Primitive::cuboid(Point3::new(1.0, 0.0, 0.0), Point3::new(0.0, 1.0, 1.0), Texture::flat(0.5));
        assert!(SceneSpec::new(vec![bad_box], 10.0, Texture::flat(0.5)).is_err());
        let bad_tex = Primitive::plane(Point3::origin(), Vector3::z(), Texture::new(0, 0.5, 1.5, 1.0));
        assert!(SceneSpec::new(vec![bad_tex], 10.0, Texture::flat(0.5)).is_err());
    }
}
