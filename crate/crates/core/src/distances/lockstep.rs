use super::{check_same_len, mean};
use crate::{Error, Result};

/// Euclidean distance between equal-length series.
pub fn eucl(x: &[f64], y: &[f64]) -> Result<f64> {
    check_same_len(x, y)?;
    Ok(x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
}

/// Pearson correlation; errors when either series has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    check_same_len(x, y)?;
    if x.len() < 2 {
        return Err(Error::Shape("correlation needs at least two points".into()));
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(Error::Degenerate("zero-variance series has no correlation".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Correlation distance `sqrt(2 (1 - rho))`, in `[0, 2]`.
///
/// Computed as the Euclidean distance between the centered, unit-norm
/// series, which equals the formula above but stays exact at `rho = 1`.
pub fn cor_dist(x: &[f64], y: &[f64]) -> Result<f64> {
    check_same_len(x, y)?;
    if x.len() < 2 {
        return Err(Error::Shape("correlation needs at least two points".into()));
    }
    let unit = |v: &[f64]| -> Result<Vec<f64>> {
        let m = mean(v);
        let c: Vec<f64> = v.iter().map(|a| a - m).collect();
        let norm = c.iter().map(|a| a * a).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return Err(Error::Degenerate("zero-variance series has no correlation".into()));
        }
        Ok(c.into_iter().map(|a| a / norm).collect())
    };
    let (u, v) = (unit(x)?, unit(y)?);
    Ok(u.iter().zip(&v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt().min(2.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn three_four_five() {
        assert_eq!(eucl(&[0.0, 0.0, 0.0], &[3.0, 4.0, 0.0]).unwrap(), 5.0);
        let x = [1.5, -2.0, 7.0];
        assert_eq!(eucl(&x, &x).unwrap(), 0.0);
    }

    #[test]
    fn length_mismatch_is_shape_error() {
        assert!(matches!(eucl(&[1.0], &[1.0, 2.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn eucl_matches_naive_loop() {
        let mut rng = crate::rng::seeded(11);
        for _ in 0..50 {
            let x: Vec<f64> = (0..52).map(|_| rng.random_range(-10.0..10.0)).collect();
            let y: Vec<f64> = (0..52).map(|_| rng.random_range(-10.0..10.0)).collect();
            let mut acc = 0.0;
            for i in 0..x.len() {
                acc += (x[i] - y[i]).powi(2);
            }
            assert!((eucl(&x, &y).unwrap() - acc.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn cor_extremes() {
        let x = [1.0, 4.0, 2.0, 8.0];
        let affine: Vec<f64> = x.iter().map(|v| 3.0 * v + 2.0).collect();
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!(cor_dist(&x, &affine).unwrap().abs() < 1e-12);
        assert_eq!(cor_dist(&x, &x).unwrap(), 0.0);
        assert!((cor_dist(&x, &neg).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn cor_matches_textbook_formula() {
        let mut rng = crate::rng::seeded(5);
        for _ in 0..50 {
            let x: Vec<f64> = (0..30).map(|_| rng.random_range(0.0..5.0)).collect();
            let y: Vec<f64> = (0..30).map(|_| rng.random_range(0.0..5.0)).collect();
            let n = x.len() as f64;
            let sx: f64 = x.iter().sum();
            let sy: f64 = y.iter().sum();
            let sxy: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
            let sxx: f64 = x.iter().map(|a| a * a).sum();
            let syy: f64 = y.iter().map(|a| a * a).sum();
            let rho = (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt());
            let expected = (2.0 * (1.0 - rho)).sqrt();
            assert!((cor_dist(&x, &y).unwrap() - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_series_is_degenerate() {
        assert!(matches!(cor_dist(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]), Err(Error::Degenerate(_))));
    }
}
