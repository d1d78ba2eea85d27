//! Ground truth derived analytically from a scene: visibility between views,
//! surface boundaries, co-moving overlays and per-frame prediction noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::scene::{Primitive, Render, SceneSpec};
use super::texture::Texture;
use crate::error::{Error, Result};
use crate::geometry::{DepthMap, Grid, ImageGrid, Intrinsics, MaskMap, Pose};

/// Relative depth margin by which a surface must be nearer to count as occluding.
const OCCLUSION_MARGIN: f64 = 1e-7;

/// How each target pixel's surface point appears in a source view.
#[derive(Debug, Clone, PartialEq)]
pub struct Covisibility {
    /// Projects inside the source image and is the nearest surface there.
    pub visible: MaskMap,
    /// Projects inside the source image but something nearer hides it.
    pub occluded: MaskMap,
    /// Behind the source camera or outside its image.
    pub out_of_view: MaskMap,
}

/// Casts a ray through the exact projection of every target surface point in the
/// source view and compares depths.
pub fn covisibility(
    scene: &SceneSpec,
    c2w_t: &Pose,
    c2w_s: &Pose,
    k: &Intrinsics,
    width: usize,
    height: usize,
) -> Result<Covisibility> {
    scene.validate()?;
    let w2c_s = c2w_s.inverse();
    #[derive(Clone, Copy, PartialEq)]
    enum State {
        Visible,
        Occluded,
        Out,
    }
    let states: Vec<State> = (0..width * height)
        .into_par_iter()
        .map(|i| {
            let (u, v) = ((i % width) as f64, (i / width) as f64);
            let Some(hit) = scene.cast_pixel(c2w_t, k, u, v) else {
                return State::Out;
            };
            let q = w2c_s.transform(&hit.point);
            if !(q.z > 0.0) {
                return State::Out;
            }
            let (us, vs) = (k.fx * q.x / q.z + k.cx, k.fy * q.y / q.z + k.cy);
            if !(us >= 0.0 && vs >= 0.0 && us <= (width - 1) as f64 && vs <= (height - 1) as f64) {
                return State::Out;
            }
            match scene.cast_pixel(c2w_s, k, us, vs) {
                Some(seen) if seen.t < q.z * (1.0 - OCCLUSION_MARGIN) => State::Occluded,
                _ => State::Visible,
            }
        })
        .collect();
    let mask = |s: State| Grid::from_vec(width, height, states.iter().map(|x| *x == s).collect());
    Ok(Covisibility {
        visible: mask(State::Visible)?,
        occluded: mask(State::Occluded)?,
        out_of_view: mask(State::Out)?,
    })
}

/// True at pixels whose surface id differs from a 4-neighbor's.
pub fn boundary_mask(ids: &Grid<u32>) -> MaskMap {
    let (w, h) = (ids.width(), ids.height());
    Grid::from_fn(w, h, |u, v| {
        let id = *ids.get(u, v);
        (u > 0 && *ids.get(u - 1, v) != id)
            || (u + 1 < w && *ids.get(u + 1, v) != id)
            || (v > 0 && *ids.get(u, v - 1) != id)
            || (v + 1 < h && *ids.get(u, v + 1) != id)
    })
}

/// A primitive rendered from the identity pose in every frame, so it stays fixed on
/// screen while the camera moves: content moving exactly with the camera.
#[derive(Debug, Clone, PartialEq)]
pub struct CoMovingLayer {
    pub render: Render,
    /// Pixels covered by the primitive.
    pub region: MaskMap,
}

impl CoMovingLayer {
    pub fn new(patch: Primitive, k: &Intrinsics, width: usize, height: usize) -> Result<Self> {
        let scene = SceneSpec::new(vec![patch], 1e6, Texture::flat(0.0))?;
        let render = scene.render(&Pose::identity(), k, width, height)?;
        let region = render.ids.map(|&id| id != u32::MAX && id / 8 == 0);
        Ok(Self { render, region })
    }

    /// Overlays the layer onto a frame rendered from any pose.
    pub fn composite(&self, base: &Render) -> Result<Render> {
        let (w, h) = (base.depth.width(), base.depth.height());
        if self.region.width() != w || self.region.height() != h {
            return Err(Error::invalid("co-moving layer resolution does not match the frame"));
        }
        let pick = |u: usize, v: usize| *self.region.get(u, v);
        let depth = DepthMap::from_fn(w, h, |u, v| {
            let src = if pick(u, v) { &self.render.depth } else { &base.depth };
            src.get(u, v).unwrap_or(0.0)
        })?;
        let image = ImageGrid::from_fn(w, h, base.image.channels(), |u, v, c| {
            let src = if pick(u, v) { &self.render.image } else { &base.image };
            src.get(u, v, c)
        })?;
        let ids = Grid::from_fn(w, h, |u, v| {
            if pick(u, v) {
                u32::MAX - 1
            } else {
                *base.ids.get(u, v)
            }
        });
        Ok(Render { depth, image, ids })
    }
}

/// Per-frame scale factors `1 + a·u_f` with `u_f` uniform in [−1, 1].
pub fn noise_factors(frames: usize, amplitude: f64, seed: u64) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&amplitude) {
        return Err(Error::invalid(format!("noise amplitude must be in [0, 1), got {amplitude}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..frames).map(|_| 1.0 + amplitude * rng.random_range(-1.0..=1.0)).collect())
}
