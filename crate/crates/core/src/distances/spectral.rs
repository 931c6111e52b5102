//! Periodogram-based measures.
//!
//! The periodogram is taken at Fourier frequencies `2 pi k / n` for
//! `k = 1..=n/2` on the mean-centered series; frequency zero is dropped so
//! level differences between series do not dominate.

use std::f64::consts::PI;

use super::mean;
use crate::{Error, Result};

const LOG_FLOOR: f64 = 1e-12;

fn intensities(x: &[f64]) -> Result<Vec<f64>> {
    let n = x.len();
    if n < 4 {
        return Err(Error::Shape(format!("periodogram needs at least 4 points, got {n}")));
    }
    let mu = mean(x);
    let nf = n as f64;
    Ok((1..=n / 2)
        .map(|k| {
            let w = 2.0 * PI * k as f64 / nf;
            let (mut re, mut im) = (0.0, 0.0);
            for (t, v) in x.iter().enumerate() {
                let a = w * t as f64;
                re += (v - mu) * a.cos();
                im -= (v - mu) * a.sin();
            }
            (re * re + im * im) / nf
        })
        .collect())
}

/// `(frequency, intensity)` pairs at the positive Fourier frequencies.
pub fn periodogram(x: &[f64]) -> Result<Vec<(f64, f64)>> {
    let n = x.len() as f64;
    Ok(intensities(x)?
        .into_iter()
        .enumerate()
        .map(|(i, v)| (2.0 * PI * (i + 1) as f64 / n, v))
        .collect())
}

/// Periodogram scaled to unit total intensity.
pub fn normalized_periodogram(x: &[f64]) -> Result<Vec<f64>> {
    let p = intensities(x)?;
    let total: f64 = p.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Degenerate("series has zero spectral intensity".into()));
    }
    Ok(p.into_iter().map(|v| v / total).collect())
}

fn same_grid(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("spectral distances need equal lengths: {} vs {}", x.len(), y.len())));
    }
    Ok(())
}

pub(crate) fn per_from(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
}

pub(crate) fn intper_from(a: &[f64], b: &[f64]) -> f64 {
    let (mut fa, mut fb, mut acc) = (0.0, 0.0, 0.0);
    for (p, q) in a.iter().zip(b) {
        fa += p;
        fb += q;
        acc += (fa - fb).abs();
    }
    acc
}

/// Euclidean distance between normalized periodograms.
pub fn per_dist(x: &[f64], y: &[f64]) -> Result<f64> {
    same_grid(x, y)?;
    Ok(per_from(&normalized_periodogram(x)?, &normalized_periodogram(y)?))
}

/// L1 distance between cumulative normalized periodograms.
pub fn intper_dist(x: &[f64], y: &[f64]) -> Result<f64> {
    same_grid(x, y)?;
    Ok(intper_from(&normalized_periodogram(x)?, &normalized_periodogram(y)?))
}

pub(crate) fn log_periodogram(x: &[f64]) -> Result<Vec<f64>> {
    Ok(intensities(x)?.into_iter().map(|v| v.max(LOG_FLOOR).ln()).collect())
}

/// Local-linear smooth of `z` over `freq` with an Epanechnikov kernel of
/// half-width `h`.
fn local_linear(freq: &[f64], z: &[f64], h: f64) -> Vec<f64> {
    freq.iter()
        .map(|&f0| {
            let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
            let w: Vec<f64> = freq
                .iter()
                .map(|&f| {
                    let u = (f - f0) / h;
                    let k = if u.abs() < 1.0 { 0.75 * (1.0 - u * u) } else { 0.0 };
                    let d = f - f0;
                    s0 += k;
                    s1 += k * d;
                    s2 += k * d * d;
                    k
                })
                .collect();
            let det = s0 * s2 - s1 * s1;
            if det.abs() <= 1e-12 * s0 * s2.max(f64::MIN_POSITIVE) {
                // Too few points in the window for a slope: local constant.
                return w.iter().zip(z).map(|(k, v)| k * v).sum::<f64>() / s0;
            }
            freq.iter()
                .zip(&w)
                .zip(z)
                .map(|((&f, &k), &v)| k * (s2 - s1 * (f - f0)) * v)
                .sum::<f64>()
                / det
        })
        .collect()
}

fn softplus(u: f64) -> f64 {
    if u > 0.0 {
        u + (-u).exp().ln_1p()
    } else {
        u.exp().ln_1p()
    }
}

pub(crate) fn glk_from(log_x: &[f64], log_y: &[f64], bandwidth: f64) -> f64 {
    let n = log_x.len();
    let freq: Vec<f64> = (1..=n).map(|k| k as f64 / n as f64 * PI).collect();
    let one_way = |a: &[f64], b: &[f64]| {
        let z: Vec<f64> = a.iter().zip(b).map(|(p, q)| p - q).collect();
        let mu = local_linear(&freq, &z, bandwidth * PI);
        let fitted: f64 = z.iter().zip(&mu).map(|(zk, mk)| (zk - mk) - 2.0 * softplus(zk - mk)).sum();
        let null: f64 = z.iter().map(|zk| zk - 2.0 * softplus(*zk)).sum();
        (fitted - null).abs()
    };
    0.5 * (one_way(log_x, log_y) + one_way(log_y, log_x))
}

/// Generalized likelihood-ratio spectral divergence with a local-linear
/// smooth of the log-periodogram ratio. Symmetrized by averaging both
/// argument orders.
pub fn specglk_dist(x: &[f64], y: &[f64], bandwidth: f64) -> Result<f64> {
    if !(bandwidth > 0.0 && bandwidth <= 0.5) {
        return Err(Error::Config(format!("GLK bandwidth must lie in (0, 0.5], got {bandwidth}")));
    }
    same_grid(x, y)?;
    Ok(glk_from(&log_periodogram(x)?, &log_periodogram(y)?, bandwidth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn cosine(n: usize, k: usize, amp: f64) -> Vec<f64> {
        (0..n).map(|t| amp * (2.0 * PI * k as f64 * t as f64 / n as f64).cos()).collect()
    }

    fn ar1(phi: f64, n: usize, rng: &mut crate::rng::Rng) -> Vec<f64> {
        let noise = Normal::new(0.0, 1.0).unwrap();
        let mut x = vec![0.0; n + 100];
        for t in 1..x.len() {
            x[t] = phi * x[t - 1] + noise.sample(rng);
        }
        x.split_off(100)
    }

    #[test]
    fn cosine_concentrates_in_its_bin() {
        let p = periodogram(&cosine(32, 3, 2.0)).unwrap();
        let total: f64 = p.iter().map(|(_, v)| v).sum();
        assert!(p[2].1 / total >= 0.99);
        assert!((p[2].0 - 2.0 * PI * 3.0 / 32.0).abs() < 1e-15);
    }

    #[test]
    fn constant_series_has_flat_zero_spectrum() {
        assert!(periodogram(&[4.0; 10]).unwrap().iter().all(|(_, v)| v.abs() < 1e-20));
        assert!(matches!(per_dist(&[4.0; 10], &cosine(10, 1, 1.0)), Err(Error::Degenerate(_))));
    }

    #[test]
    fn parseval_identity() {
        for n in [31usize, 52] {
            let mut rng = crate::rng::seeded(n as u64);
            let x = ar1(0.3, n, &mut rng);
            let p = intensities(&x).unwrap();
            let mut acc = 0.0;
            for (i, v) in p.iter().enumerate() {
                let k = i + 1;
                acc += if n % 2 == 0 && k == n / 2 { v / n as f64 } else { 2.0 * v / n as f64 };
            }
            let mu = mean(&x);
            let var = x.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n as f64;
            assert!(((acc - var) / var).abs() < 1e-6);
        }
    }

    #[test]
    fn per_is_scale_free_and_separates_bins() {
        let x = cosine(32, 2, 1.0);
        let twice: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        assert!(per_dist(&x, &twice).unwrap().abs() < 1e-12);
        let y = cosine(32, 5, 1.0);
        assert!((per_dist(&x, &y).unwrap() - 2f64.sqrt()).abs() < 1e-3);
    }

    #[test]
    fn intper_step_area() {
        // One-hot spectra at bins 2 and 5: cumulative curves differ on bins 2, 3, 4.
        let x = cosine(32, 2, 1.0);
        let y = cosine(32, 5, 1.0);
        assert!((intper_dist(&x, &y).unwrap() - 3.0).abs() < 1e-9);
        let thrice: Vec<f64> = x.iter().map(|v| 3.0 * v).collect();
        assert!(intper_dist(&x, &thrice).unwrap().abs() < 1e-9);
    }

    #[test]
    fn glk_identity_and_symmetry() {
        let mut rng = crate::rng::seeded(17);
        let x = ar1(0.5, 64, &mut rng);
        let y = ar1(-0.2, 64, &mut rng);
        assert_eq!(specglk_dist(&x, &x, 0.1).unwrap(), 0.0);
        assert!((specglk_dist(&x, &y, 0.1).unwrap() - specglk_dist(&y, &x, 0.1).unwrap()).abs() < 1e-12);
        assert!(matches!(specglk_dist(&x, &y, 0.7), Err(Error::Config(_))));
    }

    #[test]
    fn glk_separates_spectral_shapes() {
        let mut rng = crate::rng::seeded(2024);
        let mut wins = 0;
        for _ in 0..50 {
            let a = ar1(0.8, 256, &mut rng);
            let b = ar1(0.0, 256, &mut rng);
            let c = ar1(0.8, 256, &mut rng);
            if specglk_dist(&a, &b, 0.1).unwrap() > specglk_dist(&a, &c, 0.1).unwrap() {
                wins += 1;
            }
        }
        assert!(wins >= 45, "separated in {wins}/50 trials");
    }
}
