//! Geometry-guided spatial attention, feature-similarity temporal attention and
//! their fused application to bottleneck feature maps.
//!
//! Spatial weights come from the 3D distance between back-projected coarse depth
//! samples, `exp(−‖P_i − P_j‖ / σ)`. Temporal weights are a softmax over dot
//! products between a query frame's features and the concatenated features of
//! the remaining frames. Neither carries learned projections: the operators act
//! directly on the given feature maps.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{backproject_unchecked, DepthMap, Intrinsics, Point3};

/// Spatial attention length scale used when none is given, in meters.
pub const DEFAULT_SIGMA: f64 = 1.0;

/// `H × W × D` grid of feature vectors, row-major with the feature axis innermost.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    width: usize,
    height: usize,
    dim: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(width: usize, height: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("feature dimension must be >= 1"));
        }
        if data.len() != width * height * dim {
            return Err(Error::shape(
                format!("{width}x{height}x{dim}"),
                format!("{} values", data.len()),
            ));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("feature values must be finite"));
        }
        Ok(Self {
            width,
            height,
            dim,
            data,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        dim: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * dim);
        for v in 0..height {
            for u in 0..width {
                for c in 0..dim {
                    data.push(f(u, v, c));
                }
            }
        }
        Self::new(width, height, dim, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of spatial positions.
    pub fn positions(&self) -> usize {
        self.width * self.height
    }

    /// Feature vector at flat position `i`.
    #[inline]
    pub fn feature(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    fn same_shape(&self, other: &FeatureMap) -> bool {
        self.width == other.width && self.height == other.height && self.dim == other.dim
    }

    /// Element-wise sum, used for residual connections.
    pub fn add(&self, other: &FeatureMap) -> Result<FeatureMap> {
        if !self.same_shape(other) {
            return Err(Error::shape(
                format!("{}x{}x{}", self.width, self.height, self.dim),
                format!("{}x{}x{}", other.width, other.height, other.dim),
            ));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        FeatureMap::new(self.width, self.height, self.dim, data)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttentionKind {
    /// Unnormalized 3D proximity weights; aggregation divides by the row sum.
    Spatial,
    /// Row-stochastic softmax weights.
    Temporal,
}

/// Dense `n_query × n_key` attention weights.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMatrix {
    kind: AttentionKind,
    n_query: usize,
    n_key: usize,
    /// Spatial layout of the query positions, used to shape aggregated outputs.
    query_shape: (usize, usize),
    weights: Vec<f64>,
}

impl AttentionMatrix {
    /// Builds a matrix from explicit weights. Temporal rows must be probability vectors.
    pub fn new(
        kind: AttentionKind,
        query_shape: (usize, usize),
        n_key: usize,
        weights: Vec<f64>,
    ) -> Result<Self> {
        let n_query = query_shape.0 * query_shape.1;
        if weights.len() != n_query * n_key {
            return Err(Error::shape(
                format!("{n_query}x{n_key} weights"),
                format!("{} weights", weights.len()),
            ));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::invalid("attention weights must be finite and >= 0"));
        }
        if kind == AttentionKind::Temporal {
            for (i, row) in weights.chunks(n_key.max(1)).enumerate() {
                let s: f64 = row.iter().sum();
                if (s - 1.0).abs() > 1e-6 {
                    return Err(Error::invalid(format!("temporal row {i} sums to {s}")));
                }
            }
        }
        Ok(Self {
            kind,
            n_query,
            n_key,
            query_shape,
            weights,
        })
    }

    pub fn kind(&self) -> AttentionKind {
        self.kind
    }

    pub fn n_query(&self) -> usize {
        self.n_query
    }

    pub fn n_key(&self) -> usize {
        self.n_key
    }

    pub fn query_shape(&self) -> (usize, usize) {
        self.query_shape
    }

    #[inline]
    pub fn weight(&self, query: usize, key: usize) -> f64 {
        self.weights[query * self.n_key + key]
    }

    pub fn row(&self, query: usize) -> &[f64] {
        &self.weights[query * self.n_key..(query + 1) * self.n_key]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialAttentionConfig {
    /// Length scale in meters.
    pub sigma: f64,
    /// Optional pixel-distance limit; weights of farther pairs are zero.
    pub radius: Option<f64>,
}

impl Default for SpatialAttentionConfig {
    fn default() -> Self {
        Self {
            sigma: DEFAULT_SIGMA,
            radius: None,
        }
    }
}

impl SpatialAttentionConfig {
    pub fn new(sigma: f64, radius: Option<f64>) -> Result<Self> {
        let cfg = Self { sigma, radius };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::invalid(format!("sigma must be > 0, got {}", self.sigma)));
        }
        if let Some(r) = self.radius {
            if !(r > 0.0) {
                return Err(Error::invalid(format!("radius must be > 0, got {r}")));
            }
        }
        Ok(())
    }
}

/// Spatial attention over all pixel pairs of one coarse depth map.
///
/// The matrix is exactly symmetric with a unit diagonal. The depth map must be dense.
pub fn spatial_attention(
    coarse_depth: &DepthMap,
    k: &Intrinsics,
    cfg: &SpatialAttentionConfig,
) -> Result<AttentionMatrix> {
    cfg.validate()?;
    if !coarse_depth.is_fully_valid() {
        return Err(Error::invalid("coarse depth for spatial attention must be dense"));
    }
    let (w, h) = (coarse_depth.width(), coarse_depth.height());
    let n = w * h;
    let points: Vec<Point3> = (0..n)
        .map(|i| {
            let (u, v) = (i % w, i / w);
            let d = coarse_depth.get(u, v).expect("dense");
            backproject_unchecked(k, u as f64, v as f64, d)
        })
        .collect();
    let radius_sq = cfg.radius.map(|r| r * r);

    // Upper triangle row by row, then mirrored so symmetry is exact.
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let (ui, vi) = ((i % w) as f64, (i / w) as f64);
            (i + 1..n)
                .map(|j| {
                    if let Some(r2) = radius_sq {
                        let (du, dv) = ((j % w) as f64 - ui, (j / w) as f64 - vi);
                        if du * du + dv * dv > r2 {
                            return 0.0;
                        }
                    }
                    (-(points[i] - points[j]).norm() / cfg.sigma).exp()
                })
                .collect()
        })
        .collect();
    let mut weights = vec![0.0; n * n];
    for i in 0..n {
        weights[i * n + i] = 1.0;
        for (off, &wij) in upper[i].iter().enumerate() {
            let j = i + 1 + off;
            weights[i * n + j] = wij;
            weights[j * n + i] = wij;
        }
    }
    AttentionMatrix::new(AttentionKind::Spatial, (w, h), n, weights)
}

/// Softmax attention of every query position over every key position of every key map.
///
/// Key positions are concatenated in the order the maps are given.
pub fn temporal_attention(query: &FeatureMap, keys: &[&FeatureMap]) -> Result<AttentionMatrix> {
    if keys.is_empty() {
        return Err(Error::invalid("temporal attention needs at least one key map"));
    }
    if let Some(bad) = keys.iter().find(|k| k.dim != query.dim) {
        return Err(Error::invalid(format!(
            "key feature dim {} does not match query dim {}",
            bad.dim, query.dim
        )));
    }
    let key_feats: Vec<&[f64]> = keys
        .iter()
        .flat_map(|k| (0..k.positions()).map(move |j| k.feature(j)))
        .collect();
    let n_key = key_feats.len();
    if n_key == 0 {
        return Err(Error::invalid("key maps contain no positions"));
    }
    let rows: Vec<Vec<f64>> = (0..query.positions())
        .into_par_iter()
        .map(|i| {
            let q = query.feature(i);
            let logits: Vec<f64> = key_feats
                .iter()
                .map(|kf| q.iter().zip(kf.iter()).map(|(a, b)| a * b).sum())
                .collect();
            softmax(&logits)
        })
        .collect();
    AttentionMatrix::new(
        AttentionKind::Temporal,
        (query.width, query.height),
        n_key,
        rows.concat(),
    )
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Aggregates `values` with attention weights: output `i = Σ_j a(i, j) · V_j`.
///
/// `values` are concatenated position-wise in order and must hold `n_key` positions.
/// Spatial matrices are row-normalized before aggregation; temporal rows already sum to one.
pub fn apply_attention(a: &AttentionMatrix, values: &[&FeatureMap]) -> Result<FeatureMap> {
    let Some(first) = values.first() else {
        return Err(Error::invalid("no value maps given"));
    };
    let dim = first.dim;
    if values.iter().any(|v| v.dim != dim) {
        return Err(Error::invalid("value maps disagree on feature dim"));
    }
    let value_feats: Vec<&[f64]> = values
        .iter()
        .flat_map(|m| (0..m.positions()).map(move |j| m.feature(j)))
        .collect();
    if value_feats.len() != a.n_key {
        return Err(Error::shape(
            format!("{} value positions", a.n_key),
            format!("{}", value_feats.len()),
        ));
    }
    let rows: Vec<Vec<f64>> = (0..a.n_query)
        .into_par_iter()
        .map(|i| {
            let row = a.row(i);
            let norm = match a.kind {
                AttentionKind::Spatial => row.iter().sum::<f64>(),
                AttentionKind::Temporal => 1.0,
            };
            let mut out = vec![0.0; dim];
            for (w, vf) in row.iter().zip(&value_feats) {
                if *w == 0.0 {
                    continue;
                }
                for (o, x) in out.iter_mut().zip(vf.iter()) {
                    *o += w * x;
                }
            }
            if norm != 1.0 && norm > 0.0 {
                out.iter_mut().for_each(|o| *o /= norm);
            }
            out
        })
        .collect();
    let (w, h) = a.query_shape;
    FeatureMap::new(w, h, dim, rows.concat())
}

/// Spatially aggregates each frame with its own coarse depth, then lets every frame
/// attend temporally to the spatially-aware features of all other frames. The
/// temporal result is added residually to the input features.
pub fn spatial_temporal_aggregate(
    features: &[FeatureMap],
    coarse_depths: &[DepthMap],
    k: &Intrinsics,
    cfg: &SpatialAttentionConfig,
) -> Result<Vec<FeatureMap>> {
    if features.len() < 2 {
        return Err(Error::invalid("spatial-temporal aggregation needs at least two frames"));
    }
    if features.len() != coarse_depths.len() {
        return Err(Error::invalid(format!(
            "{} feature maps but {} depth maps",
            features.len(),
            coarse_depths.len()
        )));
    }
    for (f, d) in features.iter().zip(coarse_depths) {
        if !f.same_shape(&features[0]) {
            return Err(Error::invalid("feature maps must share resolution and dim"));
        }
        if d.width() != f.width || d.height() != f.height {
            return Err(Error::invalid("coarse depth resolution must match features"));
        }
    }
    let spatial: Vec<FeatureMap> = features
        .par_iter()
        .zip(coarse_depths.par_iter())
        .map(|(f, d)| apply_attention(&spatial_attention(d, k, cfg)?, &[f]))
        .collect::<Result<_>>()?;
    (0..features.len())
        .map(|q| {
            let others: Vec<&FeatureMap> = spatial
                .iter()
                .enumerate()
                .filter_map(|(j, s)| (j != q).then_some(s))
                .collect();
            let a = temporal_attention(&spatial[q], &others)?;
            features[q].add(&apply_attention(&a, &others)?)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    fn scalar_map(values: &[f64]) -> FeatureMap {
        FeatureMap::new(values.len(), 1, 1, values.to_vec()).unwrap()
    }

    #[test]
    fn spatial_diagonal_and_sigma_distance() {
        // Two pixels on a plane at depth 2 with fx = 2, one pixel apart: distance 1 = σ.
        let d = DepthMap::constant(2, 1, 2.0).unwrap();
        let k = Intrinsics::new(2.0, 2.0, 0.0, 0.0).unwrap();
        let a = spatial_attention(&d, &k, &SpatialAttentionConfig::default()).unwrap();
        assert_eq!(a.weight(0, 0), 1.0);
        assert_eq!(a.weight(1, 1), 1.0);
        assert!((a.weight(0, 1) - (-1.0f64).exp()).abs() < 1e-15);
        assert!((a.weight(0, 1) - 0.367879).abs() < 1e-6);
    }

    #[test]
    fn spatial_plane_weights() {
        // Δu pixels apart on a fronto-parallel plane at depth d: distance d·Δu/fx.
        let (d, fx, sigma) = (6.0, 3.0, 2.5);
        let depth = DepthMap::constant(4, 1, d).unwrap();
        let k = Intrinsics::new(fx, fx, 1.5, 0.0).unwrap();
        let cfg = SpatialAttentionConfig::new(sigma, None).unwrap();
        let a = spatial_attention(&depth, &k, &cfg).unwrap();
        for du in 1..4 {
            let expected = (-(d * du as f64) / (fx * sigma)).exp();
            assert!((a.weight(0, du) - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn spatial_radius_zeroes_far_pairs() {
        let depth = DepthMap::constant(5, 5, 3.0).unwrap();
        let k = Intrinsics::centered(4.0, 5, 5).unwrap();
        let cfg = SpatialAttentionConfig::new(1.0, Some(1.5)).unwrap();
        let a = spatial_attention(&depth, &k, &cfg).unwrap();
        let center = 12;
        // 8-neighborhood (distance <= √2) kept, everything else zero.
        let kept = a.row(center).iter().filter(|&&w| w > 0.0).count();
        assert_eq!(kept, 9);
        assert_eq!(a.weight(center, 0), 0.0);
        assert!(a.weight(center, 6) > 0.0);
    }

    #[test]
    fn spatial_rejects_holes_and_bad_config() {
        let depth = DepthMap::from_values(2, 1, vec![1.0, 0.0]).unwrap();
        let k = Intrinsics::centered(1.0, 2, 1).unwrap();
        assert!(spatial_attention(&depth, &k, &SpatialAttentionConfig::default()).is_err());
        assert!(SpatialAttentionConfig::new(0.0, None).is_err());
        assert!(SpatialAttentionConfig::new(1.0, Some(-1.0)).is_err());
    }

    #[test]
    fn temporal_softmax_examples() {
        // Dot products (ln 2, 0) -> weights (2/3, 1/3).
        let q = scalar_map(&[1.0]);
        let keys = scalar_map(&[LN_2, 0.0]);
        let a = temporal_attention(&q, &[&keys]).unwrap();
        assert!((a.weight(0, 0) - 2.0 / 3.0).abs() < 1e-15);
        assert!((a.weight(0, 1) - 1.0 / 3.0).abs() < 1e-15);

        let single = temporal_attention(&q, &[&scalar_map(&[7.0])]).unwrap();
        assert_eq!(single.weight(0, 0), 1.0);

        let same = FeatureMap::from_fn(3, 2, 4, |_, _, c| c as f64 * 0.1).unwrap();
        let a = temporal_attention(&same, &[&same, &same]).unwrap();
        assert_eq!(a.n_key(), 12);
        assert!(a.as_slice().iter().all(|&w| (w - 1.0 / 12.0).abs() < 1e-15));
    }

    #[test]
    fn temporal_rejects_dim_mismatch() {
        let q = FeatureMap::from_fn(2, 2, 3, |_, _, _| 0.0).unwrap();
        let k = FeatureMap::from_fn(2, 2, 2, |_, _, _| 0.0).unwrap();
        assert!(matches!(temporal_attention(&q, &[&k]), Err(Error::InvalidInput(_))));
        assert!(temporal_attention(&q, &[]).is_err());
    }

    #[test]
    fn apply_examples() {
        let values = scalar_map(&[3.0, 9.0]);
        let a = AttentionMatrix::new(AttentionKind::Temporal, (1, 1), 2, vec![2.0 / 3.0, 1.0 / 3.0])
            .unwrap();
        let out = apply_attention(&a, &[&values]).unwrap();
        assert!((out.as_slice()[0] - 5.0).abs() < 1e-14);

        let ident = AttentionMatrix::new(AttentionKind::Spatial, (2, 1), 2, vec![1.0, 0.0, 0.0, 1.0])
            .unwrap();
        assert_eq!(apply_attention(&ident, &[&values]).unwrap(), values);

        let uniform =
            AttentionMatrix::new(AttentionKind::Temporal, (2, 1), 2, vec![0.5; 4]).unwrap();
        let c = scalar_map(&[4.0, 4.0]);
        assert_eq!(apply_attention(&uniform, &[&c]).unwrap().as_slice(), &[4.0, 4.0]);
        assert!(apply_attention(&uniform, &[&scalar_map(&[1.0])]).is_err());
    }

    #[test]
    fn temporal_rows_must_be_stochastic() {
        assert!(AttentionMatrix::new(AttentionKind::Temporal, (1, 1), 2, vec![0.5, 0.6]).is_err());
        assert!(AttentionMatrix::new(AttentionKind::Spatial, (1, 1), 2, vec![-0.1, 1.0]).is_err());
    }

    #[test]
    fn aggregate_constant_features_stay_constant() {
        let (w, h) = (4, 3);
        let k = Intrinsics::centered(3.0, w, h).unwrap();
        let feats: Vec<FeatureMap> = (0..3)
            .map(|_| FeatureMap::from_fn(w, h, 2, |_, _, c| 0.25 + c as f64).unwrap())
            .collect();
        let depths: Vec<DepthMap> = (0..3)
            .map(|f| DepthMap::from_fn(w, h, |u, v| 2.0 + (u + v + f) as f64 * 0.3).unwrap())
            .collect();
        let out =
            spatial_temporal_aggregate(&feats, &depths, &k, &SpatialAttentionConfig::default())
                .unwrap();
        for o in &out {
            for i in 0..o.positions() {
                let f = o.feature(i);
                assert!((f[0] - 0.5).abs() < 1e-12 && (f[1] - 2.5).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn aggregate_single_pixel_reduces_to_softmax() {
        // 1x1 maps: spatial aggregation is the identity, temporal weights over the two
        // other frames follow the softmax of the dot products.
        let k = Intrinsics::centered(1.0, 1, 1).unwrap();
        let feats = [scalar_map(&[1.0]), scalar_map(&[LN_2]), scalar_map(&[0.0])];
        let depths: Vec<DepthMap> = (0..3).map(|_| DepthMap::constant(1, 1, 1.0).unwrap()).collect();
        let out =
            spatial_temporal_aggregate(&feats, &depths, &k, &SpatialAttentionConfig::default())
                .unwrap();
        // Query frame 0 attends to (ln 2, 0) with weights (2/3, 1/3): 1 + 2/3·ln 2.
        assert!((out[0].as_slice()[0] - (1.0 + 2.0 / 3.0 * LN_2)).abs() < 1e-14);
    }
}
