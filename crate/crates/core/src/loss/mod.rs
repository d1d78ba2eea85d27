//! Self-supervised depth losses and their masks.
//!
//! Every loss returns a [`LossResult`]: a per-pixel map, the mask it was averaged
//! over, and the masked mean. An empty mask gives a scalar of 0.

mod depth;
mod gradcheck;
mod gradient;
mod photometric;

pub use depth::{
    geometric_error, geometric_loss, motion_loss, motion_mask, reference_loss, smoothness_loss,
    MOTION_THRESHOLD,
};
pub use gradcheck::{check_gradient, gradcheck, random_problem, GradCheckReport, FD_RELATIVE_STEP};
pub use gradient::{loss_gradient, GradientProblem, LossKind};
pub use photometric::{
    auto_mask, cycle_mask, l1_error, min_mask, photometric_error, photometric_loss, ssim,
    CYCLE_PERCENTILE,
};

use crate::error::{Error, Result};
use crate::geometry::{Grid, MaskMap, ScalarMap};

#[derive(Debug, Clone, PartialEq)]
pub struct LossResult {
    /// Mean of `map` over `mask`, or 0 when the mask is empty.
    pub scalar: f64,
    /// Per-pixel loss; 0 outside the mask.
    pub map: ScalarMap,
    pub mask: MaskMap,
}

impl LossResult {
    /// Zeroes `raw` outside `mask` and averages the rest.
    pub(crate) fn masked(raw: ScalarMap, mask: MaskMap) -> Self {
        let mut sum = 0.0;
        let mut n = 0usize;
        let map = Grid::from_vec(
            raw.width(),
            raw.height(),
            raw.iter()
                .zip(mask.iter())
                .map(|(&x, &m)| {
                    if m {
                        sum += x;
                        n += 1;
                        x
                    } else {
                        0.0
                    }
                })
                .collect(),
        )
        .expect("shape");
        let scalar = if n == 0 { 0.0 } else { sum / n as f64 };
        Self { scalar, map, mask }
    }
}

/// Settings of the photometric reconstruction error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhotometricConfig {
    /// Weight of the SSIM term; `1 − alpha` weighs L1.
    pub alpha: f64,
    /// Odd side length of the square SSIM window.
    pub ssim_window: usize,
    pub c1: f64,
    pub c2: f64,
}

impl Default for PhotometricConfig {
    fn default() -> Self {
        Self {
            alpha: 0.85,
            ssim_window: 3,
            c1: 0.01 * 0.01,
            c2: 0.03 * 0.03,
        }
    }
}

impl PhotometricConfig {
    pub fn with_alpha(alpha: f64) -> Result<Self> {
        let cfg = Self {
            alpha,
            ..Self::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::invalid(format!("alpha must be in [0, 1], got {}", self.alpha)));
        }
        if self.ssim_window < 3 || self.ssim_window % 2 == 0 {
            return Err(Error::invalid(format!(
                "SSIM window must be odd and >= 3, got {}",
                self.ssim_window
            )));
        }
        if !(self.c1 > 0.0 && self.c2 > 0.0 && self.c1.is_finite() && self.c2.is_finite()) {
            return Err(Error::invalid("SSIM stabilizers must be positive"));
        }
        Ok(())
    }
}

/// Weights of the smoothness, geometric and motion terms in the total loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda_s: f64,
    pub lambda_geo: f64,
    pub lambda_m: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_s: 1e-3,
            lambda_geo: 0.1,
            lambda_m: 1.0,
        }
    }
}

impl LossWeights {
    pub fn new(lambda_s: f64, lambda_geo: f64, lambda_m: f64) -> Result<Self> {
        for (name, x) in [("lambda_s", lambda_s), ("lambda_geo", lambda_geo), ("lambda_m", lambda_m)] {
            if !(x.is_finite() && x >= 0.0) {
                return Err(Error::invalid(format!("{name} must be finite and >= 0, got {x}")));
            }
        }
        Ok(Self {
            lambda_s,
            lambda_geo,
            lambda_m,
        })
    }
}

/// Scalar values of the five loss terms on one frame triplet.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossComponents {
    pub photometric: f64,
    pub smoothness: f64,
    pub geometric: f64,
    pub motion: f64,
    pub reference: f64,
}

/// `photo + λs·smooth + λgeo·geo + λm·motion + ref`.
pub fn total_loss(c: &LossComponents, w: &LossWeights) -> f64 {
    c.photometric + w.lambda_s * c.smoothness + w.lambda_geo * c.geometric + w.lambda_m * c.motion
        + c.reference
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn total_loss_examples() {
        let w = LossWeights::default();
        assert_eq!(total_loss(&LossComponents::default(), &w), 0.0);
        let ones = LossComponents {
            photometric: 1.0,
            smoothness: 1.0,
            geometric: 1.0,
            motion: 1.0,
            reference: 1.0,
        };
        assert_eq!(total_loss(&ones, &LossWeights::new(2.0, 3.0, 4.0).unwrap()), 11.0);
        let zero = LossWeights::new(0.0, 0.0, 0.0).unwrap();
        let c = LossComponents {
            photometric: 0.25,
            reference: 0.5,
            ..ones
        };
        assert_eq!(total_loss(&c, &zero), 0.75);
    }

    #[test]
    fn config_validation() {
        assert!(LossWeights::new(-1.0, 0.0, 0.0).is_err());
        assert!(LossWeights::new(f64::NAN, 0.0, 0.0).is_err());
        assert!(PhotometricConfig::with_alpha(1.2).is_err());
        let even = PhotometricConfig {
            ssim_window: 4,
            ..PhotometricConfig::default()
        };
        assert!(even.validate().is_err());
    }

    #[test]
    fn masked_mean_and_empty_mask() {
        let raw = Grid::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let mask = Grid::from_vec(2, 2, vec![true, false, false, true]).unwrap();
        let r = LossResult::masked(raw.clone(), mask);
        assert_eq!(r.scalar, 2.5);
        assert_eq!(r.map.as_slice(), &[1.0, 0.0, 0.0, 4.0]);
        let r = LossResult::masked(raw, Grid::filled(2, 2, false));
        assert_eq!(r.scalar, 0.0);
    }
}
