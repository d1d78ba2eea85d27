//! SSIM, photometric reconstruction error and the masks built on it.

use super::{LossResult, PhotometricConfig};
use crate::error::{Error, Result};
use crate::geometry::{check_shape, Grid, ImageGrid, MaskMap, ScalarMap};
use crate::numeric::percentile;

/// Default percentile of the round-trip error used as the cycle-mask threshold.
pub const CYCLE_PERCENTILE: f64 = 0.7;

/// Windowed SSIM averaged over channels. Window statistics use replicate padding.
pub fn ssim(x: &ImageGrid, y: &ImageGrid, cfg: &PhotometricConfig) -> Result<ScalarMap> {
    cfg.validate()?;
    x.check_same_shape(y)?;
    let (w, h, ch) = (x.width(), x.height(), x.channels());
    let r = (cfg.ssim_window / 2) as isize;
    let n = (cfg.ssim_window * cfg.ssim_window) as f64;
    let clamp = |i: isize, len: usize| i.clamp(0, len as isize - 1) as usize;
    let (xs, ys) = (x.as_slice(), y.as_slice());
    Ok(Grid::from_fn(w, h, |u, v| {
        let mut total = 0.0;
        for c in 0..ch {
            let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for dv in -r..=r {
                let vv = clamp(v as isize + dv, h);
                for du in -r..=r {
                    let uu = clamp(u as isize + du, w);
                    let i = (vv * w + uu) * ch + c;
                    let (a, b) = (xs[i], ys[i]);
                    sx += a;
                    sy += b;
                    sxx += a * a;
                    syy += b * b;
                    sxy += a * b;
                }
            }
            let (mx, my) = (sx / n, sy / n);
            let vx = sxx / n - mx * mx;
            let vy = syy / n - my * my;
            let cov = sxy / n - mx * my;
            let num = (2.0 * mx * my + cfg.c1) * (2.0 * cov + cfg.c2);
            let den = (mx * mx + my * my + cfg.c1) * (vx + vy + cfg.c2);
            total += num / den;
        }
        total / ch as f64
    }))
}

/// Channel-mean absolute difference.
pub fn l1_error(x: &ImageGrid, y: &ImageGrid) -> Result<ScalarMap> {
    x.check_same_shape(y)?;
    let ch = x.channels();
    let (xs, ys) = (x.as_slice(), y.as_slice());
    Ok(Grid::from_fn(x.width(), x.height(), |u, v| {
        let base = (v * x.width() + u) * ch;
        (0..ch).map(|c| (xs[base + c] - ys[base + c]).abs()).sum::<f64>() / ch as f64
    }))
}

/// `α·(1 − SSIM)/2 + (1 − α)·L1` per pixel.
pub fn photometric_error(x: &ImageGrid, y: &ImageGrid, cfg: &PhotometricConfig) -> Result<ScalarMap> {
    let s = ssim(x, y, cfg)?;
    let l1 = l1_error(x, y)?;
    let a = cfg.alpha;
    Ok(Grid::from_fn(x.width(), x.height(), |u, v| {
        a * (1.0 - s.get(u, v)) / 2.0 + (1.0 - a) * l1.get(u, v)
    }))
}

/// Replaces pixels of a warped image that are invalid by the target's own pixels so
/// that SSIM windows straddling the validity border do not read placeholder zeros.
fn fill_invalid(recon: &ImageGrid, valid: &MaskMap, target: &ImageGrid) -> Result<ImageGrid> {
    recon.check_same_shape(target)?;
    if valid.width() != recon.width() || valid.height() != recon.height() {
        return Err(Error::shape(
            format!("{}x{}", recon.width(), recon.height()),
            format!("{}x{}", valid.width(), valid.height()),
        ));
    }
    let ch = recon.channels();
    let data = recon
        .as_slice()
        .chunks(ch)
        .zip(target.as_slice().chunks(ch))
        .zip(valid.iter())
        .flat_map(|((r, t), &ok)| if ok { r } else { t }.to_vec())
        .collect();
    ImageGrid::new(recon.width(), recon.height(), ch, data)
}

/// Photometric error against a warped reconstruction; `None` where the warp is invalid.
fn masked_error(
    target: &ImageGrid,
    recon: &ImageGrid,
    valid: &MaskMap,
    cfg: &PhotometricConfig,
) -> Result<Grid<Option<f64>>> {
    let filled = fill_invalid(recon, valid, target)?;
    let e = photometric_error(target, &filled, cfg)?;
    Ok(Grid::from_fn(e.width(), e.height(), |u, v| {
        valid.get(u, v).then(|| *e.get(u, v))
    }))
}

/// Keeps pixels whose round-trip photometric error is strictly below the `p`-th
/// nearest-rank percentile of the errors over round-trip-valid pixels.
///
/// When no pixel passes (all errors equal the minimum), every valid pixel is kept.
pub fn cycle_mask(
    i_t: &ImageGrid,
    i_t_s_t: &ImageGrid,
    round_trip_valid: &MaskMap,
    cfg: &PhotometricConfig,
    p: f64,
) -> Result<MaskMap> {
    let errors = masked_error(i_t, i_t_s_t, round_trip_valid, cfg)?;
    let valid_errors: Vec<f64> = errors.iter().flatten().copied().collect();
    if valid_errors.is_empty() {
        return Err(Error::EmptyDomain("no round-trip-valid pixels for the cycle mask".into()));
    }
    let gamma = percentile(&valid_errors, p)?;
    let mask = errors.map(|e| e.is_some_and(|e| e < gamma));
    if mask.count() == 0 {
        return Ok(round_trip_valid.clone());
    }
    Ok(mask)
}

/// Per-source masks keeping, at each pixel, only the source with the smallest error.
///
/// Ties go to the lowest source index. Non-finite errors never win; a pixel without
/// any finite error is false for every source.
pub fn min_mask(errors_per_source: &[ScalarMap]) -> Result<Vec<MaskMap>> {
    if errors_per_source.len() < 2 {
        return Err(Error::invalid("min mask needs at least two sources"));
    }
    let first = &errors_per_source[0];
    for e in &errors_per_source[1..] {
        check_shape(first, e)?;
    }
    let winners: Vec<Option<usize>> = (0..first.len())
        .map(|i| {
            let mut best: Option<(usize, f64)> = None;
            for (s, e) in errors_per_source.iter().enumerate() {
                let x = e.as_slice()[i];
                if x.is_finite() && best.is_none_or(|(_, b)| x < b) {
                    best = Some((s, x));
                }
            }
            best.map(|(s, _)| s)
        })
        .collect();
    Ok((0..errors_per_source.len())
        .map(|s| {
            Grid::from_vec(
                first.width(),
                first.height(),
                winners.iter().map(|w| *w == Some(s)).collect(),
            )
            .expect("shape")
        })
        .collect())
}

/// Per-pixel minimum over the valid candidates, `None` where no candidate is valid.
fn min_over(maps: &[Grid<Option<f64>>]) -> Grid<Option<f64>> {
    let first = &maps[0];
    Grid::from_fn(first.width(), first.height(), |u, v| {
        maps.iter()
            .filter_map(|m| *m.get(u, v))
            .fold(None, |acc: Option<f64>, x| Some(acc.map_or(x, |a| a.min(x))))
    })
}

fn check_warps(i_t: &ImageGrid, warped: &[(ImageGrid, MaskMap)]) -> Result<()> {
    if warped.is_empty() {
        return Err(Error::invalid("at least one warped source is required"));
    }
    for (img, valid) in warped {
        i_t.check_same_shape(img)?;
        if valid.width() != i_t.width() || valid.height() != i_t.height() {
            return Err(Error::shape(
                format!("{}x{}", i_t.width(), i_t.height()),
                format!("{}x{}", valid.width(), valid.height()),
            ));
        }
    }
    Ok(())
}

/// True where the best warped source explains the target strictly better than the
/// best unwarped source. Invalid warp candidates are left out of the minimum; a
/// pixel without any valid candidate is false.
pub fn auto_mask(
    i_t: &ImageGrid,
    sources: &[ImageGrid],
    warped: &[(ImageGrid, MaskMap)],
    cfg: &PhotometricConfig,
) -> Result<MaskMap> {
    check_warps(i_t, warped)?;
    if sources.len() != warped.len() {
        return Err(Error::invalid(format!(
            "{} sources but {} warped sources",
            sources.len(),
            warped.len()
        )));
    }
    let warped_err: Vec<Grid<Option<f64>>> = warped
        .iter()
        .map(|(img, valid)| masked_error(i_t, img, valid, cfg))
        .collect::<Result<_>>()?;
    let raw_err: Vec<Grid<Option<f64>>> = sources
        .iter()
        .map(|s| Ok(photometric_error(i_t, s, cfg)?.map(|&e| Some(e))))
        .collect::<Result<_>>()?;
    let (best_warped, best_raw) = (min_over(&warped_err), min_over(&raw_err));
    Ok(Grid::from_fn(i_t.width(), i_t.height(), |u, v| {
        match (best_warped.get(u, v), best_raw.get(u, v)) {
            (Some(a), Some(b)) => a < b,
            _ => false,
        }
    }))
}

/// Per-pixel minimum photometric error over the valid warped sources, averaged over
/// pixels kept by both masks and having at least one valid source.
pub fn photometric_loss(
    i_t: &ImageGrid,
    warped: &[(ImageGrid, MaskMap)],
    m_motion: &MaskMap,
    m_auto: &MaskMap,
    cfg: &PhotometricConfig,
) -> Result<LossResult> {
    check_warps(i_t, warped)?;
    let errors: Vec<Grid<Option<f64>>> = warped
        .iter()
        .map(|(img, valid)| masked_error(i_t, img, valid, cfg))
        .collect::<Result<_>>()?;
    let best = min_over(&errors);
    check_shape(&best, m_motion)?;
    check_shape(&best, m_auto)?;
    let raw = best.map(|e| e.unwrap_or(0.0));
    let mask = Grid::from_fn(i_t.width(), i_t.height(), |u, v| {
        best.get(u, v).is_some() && *m_motion.get(u, v) && *m_auto.get(u, v)
    });
    Ok(LossResult::masked(raw, mask))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray(w: usize, h: usize, f: impl Fn(usize, usize) -> f64) -> ImageGrid {
        ImageGrid::from_fn(w, h, 1, |u, v, _| f(u, v)).unwrap()
    }

    fn all(w: usize, h: usize) -> MaskMap {
        Grid::filled(w, h, true)
    }

    #[test]
    fn ssim_of_identical_images_is_exactly_one() {
        let x = ImageGrid::from_fn(7, 5, 3, |u, v, c| ((u * 7 + v * 3 + c) % 11) as f64 / 10.0)
            .unwrap();
        let s = ssim(&x, &x, &PhotometricConfig::default()).unwrap();
        assert!(s.iter().all(|&v| v == 1.0));
        let e = photometric_error(&x, &x, &PhotometricConfig::default()).unwrap();
        assert!(e.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ssim_checkerboard_against_inverse() {
        let x = gray(6, 6, |u, v| ((u + v) % 2) as f64);
        let y = gray(6, 6, |u, v| 1.0 - ((u + v) % 2) as f64);
        let cfg = PhotometricConfig::default();
        let s = ssim(&x, &y, &cfg).unwrap();
        // Interior window: mean m of x, 1 − m of y, variances m(1 − m), covariance −m(1 − m).
        for (u, v) in [(2, 2), (3, 2)] {
            let m = if (u + v) % 2 == 0 { 4.0 / 9.0 } else { 5.0 / 9.0 };
            let var = m * (1.0 - m);
            let expected = (2.0 * m * (1.0 - m) + cfg.c1) * (-2.0 * var + cfg.c2)
                / ((m * m + (1.0 - m) * (1.0 - m) + cfg.c1) * (2.0 * var + cfg.c2));
            assert!((s.get(u, v) - expected).abs() < 1e-12);
        }
        assert!(s.iter().all(|&v| v < 0.0));
    }

    #[test]
    fn ssim_constant_images_closed_form() {
        let cfg = PhotometricConfig::default();
        let s = ssim(&gray(4, 4, |_, _| 0.3), &gray(4, 4, |_, _| 0.4), &cfg).unwrap();
        let expected = (2.0 * 0.3 * 0.4 + cfg.c1) / (0.09 + 0.16 + cfg.c1);
        assert!(s.iter().all(|&v| (v - expected).abs() < 1e-12));
        assert!(ssim(&gray(4, 4, |_, _| 0.3), &gray(3, 4, |_, _| 0.3), &cfg).is_err());
    }

    #[test]
    fn photometric_error_endpoints() {
        let x = gray(4, 3, |_, _| 0.2);
        let y = gray(4, 3, |_, _| 0.5);
        let l1_only = PhotometricConfig::with_alpha(0.0).unwrap();
        let e = photometric_error(&x, &y, &l1_only).unwrap();
        assert!(e.iter().all(|&v| (v - 0.3).abs() < 1e-15));

        let ssim_only = PhotometricConfig::with_alpha(1.0).unwrap();
        let shifted = gray(5, 5, |u, v| ((u + 2 * v) % 3) as f64 / 2.0);
        let other = gray(5, 5, |u, v| ((u + 2 * v + 1) % 3) as f64 / 2.0);
        let s = ssim(&shifted, &other, &ssim_only).unwrap();
        let e = photometric_error(&shifted, &other, &ssim_only).unwrap();
        for (a, b) in e.iter().zip(s.iter()) {
            assert!((a - (1.0 - b) / 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn cycle_mask_percentile_example() {
        // L1-only errors 0.01..0.10 over 10 pixels: γ = 0.07, six pixels kept.
        let cfg = PhotometricConfig::with_alpha(0.0).unwrap();
        let t = gray(10, 1, |_, _| 0.5);
        let r = gray(10, 1, |u, _| 0.5 + (u + 1) as f64 * 0.01);
        let m = cycle_mask(&t, &r, &all(10, 1), &cfg, 0.7).unwrap();
        assert_eq!(m.count(), 6);
        assert!(m.iter().take(6).all(|&b| b));
    }

    #[test]
    fn cycle_mask_outlier_and_fallback() {
        let cfg = PhotometricConfig::with_alpha(0.0).unwrap();
        let t = gray(8, 1, |_, _| 0.2);
        let r = gray(8, 1, |u, _| if u == 5 { 1.0 } else { 0.2 });
        // γ = 0 with only the outlier nonzero, so nothing is strictly below: fallback.
        let m = cycle_mask(&t, &r, &all(8, 1), &cfg, 0.7).unwrap();
        assert_eq!(m.count(), 8);
        let r = gray(8, 1, |u, _| if u == 5 { 1.0 } else { 0.2 + u as f64 * 0.01 });
        let m = cycle_mask(&t, &r, &all(8, 1), &cfg, 0.7).unwrap();
        assert!(!m.get(5, 0));
        let m = cycle_mask(&t, &t, &all(8, 1), &cfg, 0.7).unwrap();
        assert_eq!(m.count(), 8);
        assert!(matches!(
            cycle_mask(&t, &t, &Grid::filled(8, 1, false), &cfg, 0.7),
            Err(Error::EmptyDomain(_))
        ));
    }

    #[test]
    fn cycle_mask_ignores_invalid_pixels() {
        let cfg = PhotometricConfig::with_alpha(0.0).unwrap();
        let t = gray(4, 1, |_, _| 0.2);
        let r = gray(4, 1, |u, _| 0.2 + u as f64 * 0.1);
        let valid = Grid::from_vec(4, 1, vec![true, true, true, false]).unwrap();
        let m = cycle_mask(&t, &r, &valid, &cfg, 0.7).unwrap();
        // Errors {0, 0.1, 0.2}: γ = 0.2, keeps the first two.
        assert_eq!(m.as_slice(), &[true, true, false, false]);
    }

    #[test]
    fn min_mask_examples() {
        let e = |vals: &[f64]| Grid::from_vec(vals.len(), 1, vals.to_vec()).unwrap();
        let m = min_mask(&[e(&[0.1, 0.1]), e(&[0.2, 0.1])]).unwrap();
        assert_eq!(m[0].as_slice(), &[true, true]);
        assert_eq!(m[1].as_slice(), &[false, false]);
        let m = min_mask(&[e(&[3.0]), e(&[1.0]), e(&[2.0])]).unwrap();
        assert_eq!(
            m.iter().map(|m| *m.get(0, 0)).collect::<Vec<_>>(),
            vec![false, true, false]
        );
        let m = min_mask(&[e(&[f64::INFINITY]), e(&[f64::INFINITY])]).unwrap();
        assert!(!m[0].get(0, 0) && !m[1].get(0, 0));
        assert!(min_mask(&[e(&[1.0])]).is_err());
    }

    #[test]
    fn auto_mask_cases() {
        let cfg = PhotometricConfig::default();
        let t = gray(6, 4, |u, v| 0.1 + 0.1 * ((u * 3 + v) % 7) as f64);
        let src = gray(6, 4, |u, v| 0.1 + 0.1 * ((u * 3 + v + 2) % 7) as f64);
        // Exact warp beats the unwarped source.
        let m = auto_mask(&t, &[src.clone()], &[(t.clone(), all(6, 4))], &cfg).unwrap();
        assert_eq!(m.count(), 24);
        // Unwarped source equals the target (co-moving content): never better.
        let m = auto_mask(&t, &[t.clone()], &[(src.clone(), all(6, 4))], &cfg).unwrap();
        assert_eq!(m.count(), 0);
        // Degenerate static camera: 0 < 0 is false.
        let m = auto_mask(&t, &[t.clone()], &[(t.clone(), all(6, 4))], &cfg).unwrap();
        assert_eq!(m.count(), 0);
        // Invalid candidates are skipped; no candidate at all means false.
        let none = Grid::filled(6, 4, false);
        let m = auto_mask(&t, &[src.clone(), src.clone()], &[(t.clone(), none.clone()), (t.clone(), all(6, 4))], &cfg)
            .unwrap();
        assert_eq!(m.count(), 24);
        let m = auto_mask(&t, &[src], &[(t.clone(), none)], &cfg).unwrap();
        assert_eq!(m.count(), 0);
    }

    #[test]
    fn photometric_loss_min_and_masks() {
        let cfg = PhotometricConfig::with_alpha(0.0).unwrap();
        let t = gray(2, 1, |_, _| 0.5);
        let a = gray(2, 1, |_, _| 0.7);
        let b = gray(2, 1, |_, _| 0.6);
        let r = photometric_loss(&t, &[(a.clone(), all(2, 1)), (b.clone(), all(2, 1))], &all(2, 1), &all(2, 1), &cfg)
            .unwrap();
        assert!((r.scalar - 0.1).abs() < 1e-12);
        let motion = Grid::from_vec(2, 1, vec![true, false]).unwrap();
        let r = photometric_loss(&t, &[(a, all(2, 1)), (b, all(2, 1))], &motion, &all(2, 1), &cfg).unwrap();
        assert_eq!(r.mask.as_slice(), &[true, false]);
        assert_eq!(r.map.get(1, 0), &0.0);
        let perfect = photometric_loss(&t, &[(t.clone(), all(2, 1))], &all(2, 1), &all(2, 1), &cfg).unwrap();
        assert_eq!(perfect.scalar, 0.0);
    }
}
