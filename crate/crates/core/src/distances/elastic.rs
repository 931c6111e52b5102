use crate::{Error, Result};

/// Dynamic time warping with squared local cost and the symmetric
/// match/insert/delete step pattern. Returns the square root of the optimal
/// accumulated cost so values are on the same scale as [`super::eucl`].
///
/// `window > 0` restricts the path to a Sakoe-Chiba band `|i - j| <= window`.
pub fn dtw(x: &[f64], y: &[f64], window: usize) -> Result<f64> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::Shape("DTW needs non-empty series".into()));
    }
    let (n, m) = (x.len(), y.len());
    if window > 0 && window < n.abs_diff(m) {
        return Err(Error::Constraint(format!(
            "DTW window {window} admits no path between lengths {n} and {m}"
        )));
    }
    let band = if window == 0 { usize::MAX } else { window };
    let mut prev = vec![f64::INFINITY; m + 1];
    let mut cur = vec![f64::INFINITY; m + 1];
    prev[0] = 0.0;
    for i in 1..=n {
        cur.fill(f64::INFINITY);
        let lo = if band == usize::MAX { 1 } else { i.saturating_sub(band).max(1) };
        let hi = if band == usize::MAX { m } else { (i + band).min(m) };
        for j in lo..=hi {
            let c = (x[i - 1] - y[j - 1]).powi(2);
            cur[j] = c + prev[j - 1].min(prev[j]).min(cur[j - 1]);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[m].sqrt())
}

fn soft_min(a: f64, b: f64, c: f64, gamma: f64) -> f64 {
    let lo = a.min(b).min(c);
    if lo.is_infinite() {
        return f64::INFINITY;
    }
    let s: f64 = [a, b, c]
        .iter()
        .map(|v| if v.is_finite() { (-(v - lo) / gamma).exp() } else { 0.0 })
        .sum();
    lo - gamma * s.ln()
}

/// Soft-DTW: the DTW recurrence on squared costs with the hard minimum
/// replaced by `-gamma * log(sum(exp(-v / gamma)))`. Not a metric; may be
/// negative, and `sdtw(x, x) <= 0`.
pub fn sdtw(x: &[f64], y: &[f64], gamma: f64) -> Result<f64> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::Shape("soft-DTW needs non-empty series".into()));
    }
    if !(gamma > 0.0) {
        return Err(Error::Config(format!("soft-DTW gamma must be positive, got {gamma}")));
    }
    let m = y.len();
    let mut prev = vec![f64::INFINITY; m + 1];
    let mut cur = vec![f64::INFINITY; m + 1];
    prev[0] = 0.0;
    for xi in x {
        cur[0] = f64::INFINITY;
        for j in 1..=m {
            let c = (xi - y[j - 1]).powi(2);
            cur[j] = c + soft_min(prev[j - 1], prev[j], cur[j - 1], gamma);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[m])
}

#[cfg(test)]
pub(crate) mod oracle {
    /// Minimum squared cost over every monotone boundary-to-boundary path,
    /// by explicit recursive enumeration.
    pub fn brute_force_dtw(x: &[f64], y: &[f64]) -> f64 {
        fn walk(x: &[f64], y: &[f64], i: usize, j: usize, acc: f64, best: &mut f64) {
            let acc = acc + (x[i] - y[j]).powi(2);
            if i == x.len() - 1 && j == y.len() - 1 {
                *best = best.min(acc);
                return;
            }
            if i + 1 < x.len() && j + 1 < y.len() {
                walk(x, y, i + 1, j + 1, acc, best);
            }
            if i + 1 < x.len() {
                walk(x, y, i + 1, j, acc, best);
            }
            if j + 1 < y.len() {
                walk(x, y, i, j + 1, acc, best);
            }
        }
        let mut best = f64::INFINITY;
        walk(x, y, 0, 0, 0.0, &mut best);
        best.sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::oracle::brute_force_dtw;
    use super::*;
    use crate::distances::eucl;
    use rand::Rng;

    #[test]
    fn identical_series_have_zero_dtw() {
        let x = [3.0, 1.0, 4.0, 1.0, 5.0];
        assert_eq!(dtw(&x, &x, 0).unwrap(), 0.0);
    }

    #[test]
    fn repeated_sample_is_absorbed() {
        assert_eq!(brute_force_dtw(&[1.0, 2.0, 3.0], &[1.0, 2.0, 2.0, 3.0]), 0.0);
        assert_eq!(dtw(&[1.0, 2.0, 3.0], &[1.0, 2.0, 2.0, 3.0], 0).unwrap(), 0.0);
    }

    #[test]
    fn matches_enumeration_on_short_series() {
        let mut rng = crate::rng::seeded(3);
        for _ in 0..40 {
            let n = rng.random_range(1..=6);
            let m = rng.random_range(1..=6);
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let y: Vec<f64> = (0..m).map(|_| rng.random_range(-3.0..3.0)).collect();
            assert!((dtw(&x, &y, 0).unwrap() - brute_force_dtw(&x, &y)).abs() < 1e-12);
        }
    }

    #[test]
    fn never_exceeds_euclidean() {
        let mut rng = crate::rng::seeded(8);
        for _ in 0..200 {
            let x: Vec<f64> = (0..20).map(|_| rng.random_range(-3.0..3.0)).collect();
            let y: Vec<f64> = (0..20).map(|_| rng.random_range(-3.0..3.0)).collect();
            assert!(dtw(&x, &y, 0).unwrap() <= eucl(&x, &y).unwrap() + 1e-12);
            assert!(dtw(&x, &y, 3).unwrap() <= eucl(&x, &y).unwrap() + 1e-12);
        }
    }

    #[test]
    fn band_constrains_warping() {
        let x = [0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0];
        let y = [0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let free = dtw(&x, &y, 0).unwrap();
        assert_eq!(free, 0.0);
        let banded = dtw(&x, &y, 1).unwrap();
        assert!(free < banded);
        assert!(matches!(dtw(&[1.0; 6], &[1.0; 2], 2), Err(Error::Constraint(_))));
    }

    #[test]
    fn soft_dtw_approaches_dtw_squared() {
        let x = [0.0, 1.0, 3.0, 2.0, 0.5];
        let y = [0.5, 0.8, 2.5, 3.1, 1.0, 0.0];
        let hard = dtw(&x, &y, 0).unwrap().powi(2);
        let soft = sdtw(&x, &y, 1e-3).unwrap();
        assert!(((soft - hard) / hard).abs() < 1e-3, "soft {soft} hard {hard}");
    }

    #[test]
    fn soft_dtw_self_is_nonpositive_and_symmetric() {
        let mut rng = crate::rng::seeded(9);
        let x: Vec<f64> = (0..15).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..15).map(|_| rng.random_range(-1.0..1.0)).collect();
        assert!(sdtw(&x, &x, 1.0).unwrap() <= 0.0);
        assert!((sdtw(&x, &y, 0.5).unwrap() - sdtw(&y, &x, 0.5).unwrap()).abs() < 1e-12);
        assert!(sdtw(&x, &y, 0.0).is_err());
    }
}
