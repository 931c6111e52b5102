use super::mean;
use crate::{Error, Result};

/// Biased sample autocorrelations at lags `1..=lags`.
pub fn autocorrelations(x: &[f64], lags: usize) -> Result<Vec<f64>> {
    if lags == 0 || x.len() <= lags {
        return Err(Error::Shape(format!(
            "autocorrelation needs length > lags >= 1 (length {}, lags {lags})",
            x.len()
        )));
    }
    let mu = mean(x);
    let c: Vec<f64> = x.iter().map(|v| v - mu).collect();
    let c0: f64 = c.iter().map(|v| v * v).sum();
    if c0 <= 0.0 {
        return Err(Error::Degenerate("constant series has no autocorrelation".into()));
    }
    Ok((1..=lags)
        .map(|l| c.iter().zip(&c[l..]).map(|(a, b)| a * b).sum::<f64>() / c0)
        .collect())
}

/// Partial autocorrelations at lags `1..=lags` via Durbin-Levinson.
pub fn partial_autocorrelations(x: &[f64], lags: usize) -> Result<Vec<f64>> {
    let rho = autocorrelations(x, lags)?;
    Ok(durbin_levinson(&rho))
}

pub(crate) fn durbin_levinson(rho: &[f64]) -> Vec<f64> {
    let mut pacf = Vec::with_capacity(rho.len());
    let mut phi: Vec<f64> = Vec::new();
    for k in 0..rho.len() {
        let num = rho[k] - phi.iter().enumerate().map(|(j, p)| p * rho[k - 1 - j]).sum::<f64>();
        let den = 1.0 - phi.iter().enumerate().map(|(j, p)| p * rho[j]).sum::<f64>();
        let kk = if den.abs() < 1e-300 { 0.0 } else { num / den };
        let next: Vec<f64> = (0..k).map(|j| phi[j] - kk * phi[k - 1 - j]).chain([kk]).collect();
        phi = next;
        pacf.push(kk);
    }
    pacf
}

/// Euclidean distance between (partial) autocorrelation vectors.
pub fn acf_dist(x: &[f64], y: &[f64], lags: usize, partial: bool) -> Result<f64> {
    let f = if partial { partial_autocorrelations } else { autocorrelations };
    let (a, b) = (f(x, lags)?, f(y, lags)?);
    Ok(a.iter().zip(&b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt())
}
