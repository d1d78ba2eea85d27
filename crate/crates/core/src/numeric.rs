//! Order statistics and finite differences.

use crate::error::{Error, Result};

/// Nearest-rank percentile: sort ascending and return element `ceil(p·n) − 1`.
///
/// `p` must lie in (0, 1]. NaN entries are rejected.
pub fn percentile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::invalid("percentile of an empty list"));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::invalid(format!("percentile fraction must be in (0, 1], got {p}")));
    }
    if values.iter().any(|x| x.is_nan()) {
        return Err(Error::invalid("percentile input contains NaN"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = (p * sorted.len() as f64).ceil() as usize;
    Ok(sorted[rank.clamp(1, sorted.len()) - 1])
}

/// Median with the mean of the two middle elements for even counts.
pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyDomain("median of an empty list".into()));
    }
    let mut v = values.to_vec();
    let n = v.len();
    let (below, &mut hi, _) = v.select_nth_unstable_by(n / 2, f64::total_cmp);
    Ok(if n % 2 == 1 {
        hi
    } else {
        let lo = below.iter().copied().max_by(f64::total_cmp).expect("n >= 2");
        0.5 * (lo + hi)
    })
}

/// Central difference `(f(x + h) − f(x − h)) / 2h` for every coordinate of `x`.
///
/// `step(i, x_i)` gives the step for coordinate `i`; coordinates with a zero step are skipped
/// and report 0.
pub fn central_difference<E>(
    x: &[f64],
    step: impl Fn(usize, f64) -> f64,
    mut f: impl FnMut(&[f64]) -> std::result::Result<f64, E>,
) -> std::result::Result<Vec<f64>, E> {
    let mut probe = x.to_vec();
    let mut grad = vec![0.0; x.len()];
    for i in 0..x.len() {
        let h = step(i, x[i]);
        if h == 0.0 {
            continue;
        }
        probe[i] = x[i] + h;
        let plus = f(&probe)?;
        probe[i] = x[i] - h;
        let minus = f(&probe)?;
        probe[i] = x[i];
        grad[i] = (plus - minus) / (2.0 * h);
    }
    Ok(grad)
}

/// `|a − b| / max(|a|, |b|)`, or 0 when both are below `floor`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale <= floor {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank_examples() {
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(percentile(&v, 0.7).unwrap(), 7.0);
        assert_eq!(percentile(&[5.0], 0.3).unwrap(), 5.0);
        assert_eq!(percentile(&[5.0], 1.0).unwrap(), 5.0);
        assert_eq!(percentile(&[3.0, 3.0, 3.0], 0.7).unwrap(), 3.0);
        assert_eq!(percentile(&[9.0, 1.0, 4.0], 1.0).unwrap(), 9.0);
        assert_eq!(percentile(&[9.0, 1.0, 4.0], 0.01).unwrap(), 1.0);
    }

    #[test]
    fn percentile_errors() {
        assert!(matches!(percentile(&[], 0.7), Err(Error::InvalidInput(_))));
        assert!(percentile(&[1.0], 0.0).is_err());
        assert!(percentile(&[1.0], 1.5).is_err());
        assert!(percentile(&[1.0, f64::NAN], 0.5).is_err());
    }

    #[test]
    fn median_examples() {
        assert_eq!(median(&[1.0, 2.0, 100.0]).unwrap(), 2.0);
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]).unwrap(), 2.5);
        assert!(median(&[]).is_err());
    }

    #[test]
    fn central_difference_of_cubic() {
        // f = x0³ + 2·x0·x1, ∇f = (3x0² + 2x1, 2x0)
        let g = central_difference(&[1.5, -2.0], |_, x| 1e-4 * x.abs(), |x| {
            Ok::<_, ()>(x[0].powi(3) + 2.0 * x[0] * x[1])
        })
        .unwrap();
        assert!((g[0] - (3.0 * 2.25 - 4.0)).abs() < 1e-6);
        assert!((g[1] - 3.0).abs() < 1e-6);
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0, 1e-12), 0.0);
        assert_eq!(relative_error(1.0, 0.5, 1e-12), 0.5);
    }
}
