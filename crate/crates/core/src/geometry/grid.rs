//! Row-major raster containers shared by every module.
//!
//! Pixel `(u, v)` is (column, row); the flat index is `v * width + u`.

use crate::error::{Error, Result};

/// A dense row-major `width × height` raster of arbitrary cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Clone> Grid<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }
}

impl<T> Grid<T> {
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::shape(
                format!("{} cells ({width}x{height})", width * height),
                format!("{} cells", data.len()),
            ));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for v in 0..height {
            for u in 0..width {
                data.push(f(u, v));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, u: usize, v: usize) -> usize {
        debug_assert!(u < self.width && v < self.height);
        v * self.width + u
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> &T {
        &self.data[self.index(u, v)]
    }

    #[inline]
    pub fn get_mut(&mut self, u: usize, v: usize) -> &mut T {
        let i = self.index(u, v);
        &mut self.data[i]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn same_shape<U>(&self, other: &Grid<U>) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Grid<U> {
        Grid {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn iter(&self) -> std::slice::Iter<'_, T> {
        self.data.iter()
    }
}

/// Per-pixel binary mask. Semantics depend on the producing operation.
pub type MaskMap = Grid<bool>;

/// Per-pixel real-valued map (losses, errors, gradients).
pub type ScalarMap = Grid<f64>;

impl MaskMap {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn coverage(&self) -> f64 {
        if self.data.is_empty() {
            0.0
        } else {
            self.count() as f64 / self.data.len() as f64
        }
    }

    pub fn and(&self, other: &MaskMap) -> Result<MaskMap> {
        check_shape(self, other)?;
        Ok(Grid {
            width: self.width,
            height: self.height,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a && b).collect(),
        })
    }

    pub fn not(&self) -> MaskMap {
        self.map(|&b| !b)
    }

    /// Morphological erosion with a square `(2r+1)²` structuring element.
    /// Pixels whose neighborhood leaves the image are eroded.
    pub fn erode(&self, radius: usize) -> MaskMap {
        let r = radius as isize;
        Grid::from_fn(self.width, self.height, |u, v| {
            for dv in -r..=r {
                for du in -r..=r {
                    let (x, y) = (u as isize + du, v as isize + dv);
                    if x < 0 || y < 0 || x >= self.width as isize || y >= self.height as isize {
                        return false;
                    }
                    if !self.get(x as usize, y as usize) {
                        return false;
                    }
                }
            }
            true
        })
    }
}

pub(crate) fn check_shape<A, B>(a: &Grid<A>, b: &Grid<B>) -> Result<()> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(Error::shape(
            format!("{}x{}", a.width, a.height),
            format!("{}x{}", b.width, b.height),
        ))
    }
}

/// Depth in meters with an explicit validity mask.
///
/// Every valid entry is finite and strictly positive. Invalid entries hold 0.0 so
/// that two maps with the same valid content compare equal.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    values: Grid<f64>,
    valid: MaskMap,
}

impl DepthMap {
    /// Builds a depth map from raw values; non-finite or non-positive entries become invalid.
    pub fn from_values(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        let mut values = Grid::from_vec(width, height, values)?;
        let valid = values.map(|&d| d.is_finite() && d > 0.0);
        for (d, &ok) in values.as_mut_slice().iter_mut().zip(valid.as_slice()) {
            if !ok {
                *d = 0.0;
            }
        }
        Ok(Self { values, valid })
    }

    /// Builds a depth map with an explicit mask. Entries marked valid must be finite and > 0.
    pub fn new(values: Grid<f64>, valid: MaskMap) -> Result<Self> {
        check_shape(&values, &valid)?;
        let mut values = values;
        for (i, (d, &ok)) in values.as_mut_slice().iter_mut().zip(valid.as_slice()).enumerate() {
            if ok {
                if !(d.is_finite() && *d > 0.0) {
                    return Err(Error::invalid(format!(
                        "depth entry {i} marked valid but equals {d}"
                    )));
                }
            } else {
                *d = 0.0;
            }
        }
        Ok(Self { values, valid })
    }

    pub fn constant(width: usize, height: usize, depth: f64) -> Result<Self> {
        Self::from_values(width, height, vec![depth; width * height])
    }

    pub fn from_fn(width: usize, height: usize, f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        Self::from_values(width, height, Grid::from_fn(width, height, f).into_vec())
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.values.width()
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.values.height()
    }

    /// Depth at `(u, v)` if valid.
    #[inline]
    pub fn get(&self, u: usize, v: usize) -> Option<f64> {
        if *self.valid.get(u, v) {
            Some(*self.values.get(u, v))
        } else {
            None
        }
    }

    pub fn values(&self) -> &Grid<f64> {
        &self.values
    }

    pub fn valid(&self) -> &MaskMap {
        &self.valid
    }

    pub fn is_fully_valid(&self) -> bool {
        self.valid.iter().all(|&b| b)
    }

    /// Valid depths in row-major order.
    pub fn valid_values(&self) -> Vec<f64> {
        self.values
            .iter()
            .zip(self.valid.iter())
            .filter_map(|(&d, &ok)| ok.then_some(d))
            .collect()
    }

    /// Multiplies every valid depth by `factor` (> 0).
    pub fn scaled(&self, factor: f64) -> Result<DepthMap> {
        if !(factor.is_finite() && factor > 0.0) {
            return Err(Error::invalid(format!("depth scale must be > 0, got {factor}")));
        }
        DepthMap::new(self.values.map(|&d| d * factor), self.valid.clone())
    }

    /// Replaces the valid depth at a flat index; used by finite-difference probes.
    pub fn with_value(&self, index: usize, depth: f64) -> Result<DepthMap> {
        let mut values = self.values.clone();
        values.as_mut_slice()[index] = depth;
        DepthMap::new(values, self.valid.clone())
    }

    pub fn same_shape(&self, other: &DepthMap) -> bool {
        self.values.same_shape(&other.values)
    }
}

/// Multi-channel image with interleaved channels, values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ImageGrid {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 {
            return Err(Error::invalid("image must have at least one channel"));
        }
        if data.len() != width * height * channels {
            return Err(Error::shape(
                format!("{}x{}x{}", width, height, channels),
                format!("{} values", data.len()),
            ));
        }
        if let Some(bad) = data.iter().find(|x| !(x.is_finite() && (0.0..=1.0).contains(*x))) {
            return Err(Error::invalid(format!("image value {bad} outside [0, 1]")));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn constant(width: usize, height: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(width, height, channels, vec![value; width * height * channels])
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * channels);
        for v in 0..height {
            for u in 0..width {
                for c in 0..channels {
                    data.push(f(u, v, c));
                }
            }
        }
        Self::new(width, height, channels, data)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize, c: usize) -> f64 {
        self.data[(v * self.width + u) * self.channels + c]
    }

    #[inline]
    pub fn pixel(&self, u: usize, v: usize) -> &[f64] {
        let start = (v * self.width + u) * self.channels;
        &self.data[start..start + self.channels]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn same_shape(&self, other: &ImageGrid) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    pub(crate) fn check_same_shape(&self, other: &ImageGrid) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::shape(
                format!("{}x{}x{}", self.width, self.height, self.channels),
                format!("{}x{}x{}", other.width, other.height, other.channels),
            ))
        }
    }

    /// Single channel `c` as a scalar grid.
    pub fn channel(&self, c: usize) -> Grid<f64> {
        Grid::from_fn(self.width, self.height, |u, v| self.get(u, v, c))
    }

    /// Channel mean at every pixel.
    pub fn to_gray(&self) -> Grid<f64> {
        Grid::from_fn(self.width, self.height, |u, v| {
            self.pixel(u, v).iter().sum::<f64>() / self.channels as f64
        })
    }
}
