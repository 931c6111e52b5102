use crate::{Error, Result};

/// Shape-based distance: one minus the largest normalized cross-correlation
/// over every integer shift with overlap. Lies in `[0, 2]`.
pub fn sbd(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::Shape("SBD needs non-empty series".into()));
    }
    let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    if nx == 0.0 || ny == 0.0 {
        return Err(Error::Degenerate("SBD is undefined for an all-zero series".into()));
    }
    let (n, m) = (x.len() as isize, y.len() as isize);
    let mut best = f64::NEG_INFINITY;
    // Shift s aligns y[t - s] under x[t].
    for s in -(m - 1)..n {
        let lo = s.max(0);
        let hi = n.min(m + s);
        let cc: f64 = (lo..hi).map(|t| x[t as usize] * y[(t - s) as usize]).sum();
        best = best.max(cc);
    }
    Ok((1.0 - best / (nx * ny)).clamp(0.0, 2.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn self_distance_is_zero() {
        let x = [1.0, 3.0, -2.0, 0.5];
        assert!(sbd(&x, &x).unwrap().abs() < 1e-12);
    }

    #[test]
    fn pure_shift_is_zero() {
        // Shifts -2..=2 give cross-correlations 0, 0, 0, 1, 0 respectively.
        assert!(sbd(&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]).unwrap().abs() < 1e-12);
    }

    #[test]
    fn negation_of_single_sample_is_two() {
        assert_eq!(sbd(&[3.0], &[-3.0]).unwrap(), 2.0);
    }

    #[test]
    fn negation_of_longer_series_stays_in_range() {
        // Nonzero shifts of x against -x keep some positive overlap.
        let x = [1.0, -1.0];
        let neg = [-1.0, 1.0];
        assert!((sbd(&x, &neg).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn zero_series_is_degenerate() {
        assert!(matches!(sbd(&[0.0, 0.0], &[1.0, 2.0]), Err(Error::Degenerate(_))));
    }
}
