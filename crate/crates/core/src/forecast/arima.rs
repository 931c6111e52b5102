use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::optim::nelder_mead;
use super::{difference, lagged, ArimaFit, ArimaOrder};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iter: usize,
    pub rel_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { max_iter: 500, rel_tol: 1e-8 }
    }
}

const PENALTY: f64 = 1e6;

/// One-step-ahead innovations of an ARMA model for the mean-`mu` series
/// `w`. Pre-sample deviations and innovations are zero.
pub fn residuals(w: &[f64], mu: f64, phi: &[f64], theta: &[f64]) -> Vec<f64> {
    let dev: Vec<f64> = w.iter().map(|v| v - mu).collect();
    let mut e = vec![0.0; w.len()];
    for t in 0..w.len() {
        let ar: f64 = phi.iter().enumerate().map(|(i, p)| p * lagged(&dev, t, i + 1)).sum();
        let ma: f64 = theta.iter().enumerate().map(|(j, th)| th * lagged(&e, t, j + 1)).sum();
        e[t] = dev[t] - ar - ma;
    }
    e
}

fn css(w: &[f64], mu: f64, phi: &[f64], theta: &[f64]) -> f64 {
    residuals(w, mu, phi, theta).iter().map(|e| e * e).sum()
}

/// Largest companion-matrix eigenvalue modulus for the lag polynomial
/// `1 - sum c_i z^i`. Values below 1 mean every root lies outside the unit
/// circle.
fn max_inverse_root(coefs: &[f64]) -> f64 {
    match coefs.len() {
        0 => 0.0,
        1 => coefs[0].abs(),
        k => {
            let mut m = DMatrix::<f64>::zeros(k, k);
            for (j, c) in coefs.iter().enumerate() {
                m[(0, j)] = *c;
            }
            for i in 1..k {
                m[(i, i - 1)] = 1.0;
            }
            m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
        }
    }
}

/// Amount by which the AR or MA polynomial violates causality or
/// invertibility; zero for admissible parameters.
fn root_excess(phi: &[f64], theta: &[f64]) -> Option<f64> {
    let neg: Vec<f64> = theta.iter().map(|t| -t).collect();
    let worst = max_inverse_root(phi).max(max_inverse_root(&neg));
    (worst >= 1.0).then(|| worst - 1.0)
}

fn ols(design: &DMatrix<f64>, target: &DVector<f64>) -> Option<DVector<f64>> {
    design.clone().svd(true, true).solve(target, 1e-12).ok()
}

/// Hannan-Rissanen starting values for zero-mean `dev`.
fn hannan_rissanen(dev: &[f64], p: usize, q: usize) -> (Vec<f64>, Vec<f64>) {
    let n = dev.len();
    let regress = |cols: &[Vec<f64>], start: usize| -> Option<Vec<f64>> {
        if cols.is_empty() {
            return Some(Vec::new());
        }
        let rows = n.checked_sub(start).filter(|&r| r > cols.len())?;
        let x = DMatrix::from_fn(rows, cols.len(), |r, c| cols[c][start + r]);
        let y = DVector::from_fn(rows, |r, _| dev[start + r]);
        ols(&x, &y).map(|b| b.iter().copied().collect())
    };
    let shifted = |v: &[f64], lag: usize| -> Vec<f64> { (0..n).map(|t| lagged(v, t, lag)).collect() };

    let innov = if q > 0 {
        let m = (p + q + 2).max(((n as f64).ln().powi(2)) as usize).min(n / 3).max(1);
        let cols: Vec<Vec<f64>> = (1..=m).map(|l| shifted(dev, l)).collect();
        match regress(&cols, m) {
            Some(a) => residuals(dev, 0.0, &a, &[]),
            None => return (vec![0.0; p], vec![0.0; q]),
        }
    } else {
        Vec::new()
    };
    let mut cols: Vec<Vec<f64>> = (1..=p).map(|l| shifted(dev, l)).collect();
    cols.extend((1..=q).map(|l| shifted(&innov, l)));
    let start = p.max(q) + if q > 0 { (p + q + 2).min(n / 3) } else { 0 };
    match regress(&cols, start) {
        Some(b) => (b[..p].to_vec(), b[p..].to_vec()),
        None => (vec![0.0; p], vec![0.0; q]),
    }
}

/// Pull inadmissible starting values back inside the admissible region.
fn shrink_to_admissible(phi: &mut [f64], theta: &mut [f64]) {
    for _ in 0..60 {
        if root_excess(phi, theta).is_none() {
            return;
        }
        phi.iter_mut().chain(theta.iter_mut()).for_each(|c| *c *= 0.7);
    }
    phi.fill(0.0);
    theta.fill(0.0);
}

/// Fit ARIMA(p, d, q) by conditional sum of squares.
pub fn fit_arima(x: &[f64], order: ArimaOrder) -> Result<ArimaFit> {
    fit_arima_with(x, order, FitOptions::default())
}

pub fn fit_arima_with(x: &[f64], order: ArimaOrder, opts: FitOptions) -> Result<ArimaFit> {
    let ArimaOrder { p, d, q } = order;
    let need = 10 + p + q + d;
    if x.len() < need {
        return Err(Error::Shape(format!("{order} needs at least {need} points, got {}", x.len())));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("series contains non-finite values".into()));
    }
    let w = difference(x, d)?;
    let n = w.len();
    let mean = w.iter().sum::<f64>() / n as f64;
    let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    if !(var > 1e-300) || var.sqrt() <= 1e-12 * mean.abs() {
        return Err(Error::Degenerate(format!("series has zero variance after differencing {d} times")));
    }
    let sd = var.sqrt();
    let with_mu = order.has_intercept();
    let centre = if with_mu { mean } else { 0.0 };
    let dev: Vec<f64> = w.iter().map(|v| v - centre).collect();

    let (mut phi, mut theta) = hannan_rissanen(&dev, p, q);
    shrink_to_admissible(&mut phi, &mut theta);

    // Work on a unit-scale problem: the mean offset is in standard
    // deviations and the objective is RSS relative to the total variance.
    let scale = n as f64 * var;
    let unpack = |v: &[f64]| -> (f64, Vec<f64>, Vec<f64>) {
        let mu = if with_mu { centre + v[p + q] * sd } else { 0.0 };
        (mu, v[..p].to_vec(), v[p..p + q].to_vec())
    };
    let objective = |v: &[f64]| -> f64 {
        let (mu, ph, th) = unpack(v);
        let base = css(&w, mu, &ph, &th) / scale;
        match root_excess(&ph, &th) {
            Some(excess) => base + PENALTY * (1.0 + excess),
            None => base,
        }
    };

    let mut start: Vec<f64> = phi.iter().chain(&theta).copied().collect();
    if with_mu {
        start.push(0.0);
    }
    let (best, converged) = if p + q == 0 {
        // Closed form: the mean minimizes the sum of squares.
        (start, true)
    } else {
        let mut budget = opts.max_iter;
        let mut m = nelder_mead(objective, &start, 0.1, budget, opts.rel_tol);
        budget = budget.saturating_sub(m.iterations);
        // Restart from the optimum to escape premature simplex collapse.
        while budget > 0 {
            let again = nelder_mead(objective, &m.x, 0.05, budget, opts.rel_tol);
            budget = budget.saturating_sub(again.iterations.max(1));
            let improved = again.value < m.value * (1.0 - opts.rel_tol);
            let done = again.converged && !improved;
            if again.value <= m.value {
                m = again;
            }
            if done {
                break;
            }
        }
        (m.x.clone(), m.converged && m.value < PENALTY)
    };

    let (mu, phi, theta) = unpack(&best);
    let rss = css(&w, mu, &phi, &theta);
    let sigma2 = (rss / n as f64).max(var * 1e-15);
    let k = order.param_count() as f64;
    let ln_s2 = sigma2.ln();
    Ok(ArimaFit {
        order,
        phi,
        theta,
        intercept: with_mu.then_some(mu),
        sigma2,
        css: rss,
        n_eff: n,
        aic: n as f64 * ln_s2 + 2.0 * k,
        loglik_proxy: -0.5 * n as f64 * ((2.0 * std::f64::consts::PI).ln() + ln_s2 + 1.0),
        converged,
    })
}

/// Fit every order in `[0, p_max] x [0, d_max] x [0, q_max]` except the
/// intercept-free white-noise models and return the lowest AIC. Ties go to
/// smaller `p + q`, then smaller `p`, then smaller `d`.
pub fn select_arima(x: &[f64], p_max: usize, q_max: usize, d_max: usize) -> Result<ArimaFit> {
    let grid = order_grid(p_max, q_max, d_max);
    if grid.is_empty() {
        return Err(Error::Config("ARIMA order grid is empty".into()));
    }
    let fits: Vec<(ArimaOrder, Result<ArimaFit>)> = grid.into_par_iter().map(|o| (o, fit_arima(x, o))).collect();
    let mut failures = Vec::new();
    let mut usable = Vec::new();
    for (order, fit) in fits {
        match fit {
            Ok(f) if f.aic.is_finite() => usable.push(f),
            Ok(_) => failures.push(format!("{order}: non-finite AIC")),
            Err(e) => failures.push(format!("{order}: {e}")),
        }
    }
    // Fits with a root hugging the unit circle are CSS artifacts (typically
    // a near-unit MA root cancelling a near-unit AR root); skip them unless
    // nothing else is left.
    let stable: Vec<&ArimaFit> = usable.iter().filter(|f| !near_unit_root(f)).collect();
    let pool: Vec<&ArimaFit> = if stable.is_empty() { usable.iter().collect() } else { stable };
    let key = |f: &ArimaFit| (f.order.p + f.order.q, f.order.p, f.order.d);
    pool.into_iter()
        .min_by(|a, b| a.aic.total_cmp(&b.aic).then(key(a).cmp(&key(b))))
        .cloned()
        .ok_or_else(|| Error::AllFitsFailed(failures.join("; ")))
}

/// Smallest root modulus allowed for order selection.
const SELECTION_ROOT_MARGIN: f64 = 1.01;

fn near_unit_root(f: &ArimaFit) -> bool {
    let neg: Vec<f64> = f.theta.iter().map(|t| -t).collect();
    max_inverse_root(&f.phi).max(max_inverse_root(&neg)) * SELECTION_ROOT_MARGIN > 1.0
}

pub(crate) fn order_grid(p_max: usize, q_max: usize, d_max: usize) -> Vec<ArimaOrder> {
    let mut grid = Vec::new();
    for d in 0..=d_max {
        for p in 0..=p_max {
            for q in 0..=q_max {
                if p + q == 0 && d > 0 {
                    continue;
                }
                grid.push(ArimaOrder::new(p, d, q));
            }
        }
    }
    grid
}
