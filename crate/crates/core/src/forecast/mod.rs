//! ARIMA(p, d, q) estimation by conditional sum of squares, AIC order
//! selection and recursive forecasting.

mod arima;
pub mod optim;

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

pub use arima::{fit_arima, residuals, select_arima, FitOptions};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ArimaOrder {
    pub p: usize,
    pub d: usize,
    pub q: usize,
}

impl ArimaOrder {
    pub fn new(p: usize, d: usize, q: usize) -> Self {
        Self { p, d, q }
    }

    /// The process mean is estimated only for undifferenced models.
    pub fn has_intercept(&self) -> bool {
        self.d == 0
    }

    /// Estimated parameters including the innovation variance.
    pub fn param_count(&self) -> usize {
        self.p + self.q + 1 + usize::from(self.has_intercept())
    }
}

impl fmt::Display for ArimaOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ARIMA({},{},{})", self.p, self.d, self.q)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArimaFit {
    pub order: ArimaOrder,
    pub phi: Vec<f64>,
    pub theta: Vec<f64>,
    /// Process mean of the undifferenced series; `None` when `d > 0`.
    pub intercept: Option<f64>,
    pub sigma2: f64,
    /// Residual sum of squares at the optimum.
    pub css: f64,
    pub n_eff: usize,
    pub aic: f64,
    pub loglik_proxy: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forecast {
    pub horizon: usize,
    pub values: Vec<f64>,
    pub origin_len: usize,
}

/// Apply `d` rounds of first differencing.
pub fn difference(x: &[f64], d: usize) -> Result<Vec<f64>> {
    Ok(difference_with_initials(x, d)?.0)
}

/// Differenced series plus the first value of every intermediate level,
/// which [`integrate`] needs to undo the differencing.
pub fn difference_with_initials(x: &[f64], d: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if d >= x.len() {
        return Err(Error::Shape(format!("cannot difference {} points {d} times", x.len())));
    }
    let mut cur = x.to_vec();
    let mut initials = Vec::with_capacity(d);
    for _ in 0..d {
        initials.push(cur[0]);
        cur = cur.windows(2).map(|w| w[1] - w[0]).collect();
    }
    Ok((cur, initials))
}

/// Inverse of [`difference_with_initials`].
pub fn integrate(w: &[f64], initials: &[f64]) -> Vec<f64> {
    let mut cur = w.to_vec();
    for &start in initials.iter().rev() {
        let mut next = Vec::with_capacity(cur.len() + 1);
        next.push(start);
        for v in &cur {
            let last = *next.last().unwrap();
            next.push(last + v);
        }
        cur = next;
    }
    cur
}

/// Recursive conditional-expectation forecasts `h` steps past the end of
/// `x`, the series `fit` was estimated on. Future innovations are zero;
/// past innovations come from the fitted residual recursion.
pub fn forecast(fit: &ArimaFit, x: &[f64], h: usize) -> Result<Forecast> {
    if h == 0 {
        return Err(Error::Config("forecast horizon must be at least 1".into()));
    }
    let d = fit.order.d;
    let w = difference(x, d)?;
    let mu = fit.intercept.unwrap_or(0.0);
    let e = residuals(&w, mu, &fit.phi, &fit.theta);
    let mut dev: Vec<f64> = w.iter().map(|v| v - mu).collect();
    let mut innov = e;
    for _ in 0..h {
        let t = dev.len();
        let ar: f64 = fit.phi.iter().enumerate().map(|(i, p)| p * lagged(&dev, t, i + 1)).sum();
        let ma: f64 = fit.theta.iter().enumerate().map(|(j, th)| th * lagged(&innov, t, j + 1)).sum();
        dev.push(ar + ma);
        innov.push(0.0);
    }
    let mut level: Vec<f64> = dev[w.len()..].iter().map(|v| v + mu).collect();
    // Undo differencing from the innermost level outwards.
    for k in (0..d).rev() {
        let base = difference(x, k)?;
        let mut last = *base.last().unwrap();
        for v in level.iter_mut() {
            last += *v;
            *v = last;
        }
    }
    Ok(Forecast { horizon: h, values: level, origin_len: x.len() })
}

#[inline]
pub(crate) fn lagged(v: &[f64], t: usize, lag: usize) -> f64 {
    if t >= lag {
        v[t - lag]
    } else {
        0.0
    }
}

/// One row per cluster: `cluster,model,aic,pred_1..pred_h`.
pub fn write_forecast_csv<W: Write>(rows: &[(String, ArimaFit, Forecast)], out: W) -> Result<()> {
    let h = rows.iter().map(|r| r.2.horizon).max().unwrap_or(0);
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["cluster".to_owned(), "model".to_owned(), "aic".to_owned()];
    header.extend((1..=h).map(|k| format!("pred_{k}")));
    w.write_record(&header)?;
    for (name, fit, fc) in rows {
        let mut rec = vec![name.clone(), fit.order.to_string(), fit.aic.to_string()];
        rec.extend(fc.values.iter().map(|v| v.to_string()));
        rec.resize(header.len(), String::new());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fit_with(order: ArimaOrder, phi: Vec<f64>, theta: Vec<f64>, intercept: Option<f64>) -> ArimaFit {
        ArimaFit {
            order,
            phi,
            theta,
            intercept,
            sigma2: 1.0,
            css: 1.0,
            n_eff: 1,
            aic: 0.0,
            loglik_proxy: 0.0,
            converged: true,
        }
    }

    #[test]
    fn differencing_basics() {
        assert_eq!(difference(&[1.0, 3.0, 6.0, 10.0], 0).unwrap(), vec![1.0, 3.0, 6.0, 10.0]);
        assert_eq!(difference(&[1.0, 3.0, 6.0, 10.0], 1).unwrap(), vec![2.0, 3.0, 4.0]);
        assert_eq!(difference(&[1.0, 3.0, 6.0, 10.0], 2).unwrap(), vec![1.0, 1.0]);
        assert!(matches!(difference(&[1.0, 2.0], 2), Err(Error::Shape(_))));
    }

    proptest! {
        #[test]
        fn difference_integrate_round_trip(x in proptest::collection::vec(-1e3f64..1e3, 4..40), d in 0usize..3) {
            let (w, init) = difference_with_initials(&x, d).unwrap();
            let back = integrate(&w, &init);
            prop_assert_eq!(back.len(), x.len());
            let scale = x.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            for (a, b) in back.iter().zip(&x) {
                prop_assert!((a - b).abs() <= 1e-12 * scale * 8.0);
            }
        }
    }

    #[test]
    fn ma1_forecast_flattens_after_one_step() {
        let x = [3.0, 5.0, 4.0, 6.0, 2.0, 4.5, 5.5, 3.0, 4.0, 5.0];
        let fit = fit_with(ArimaOrder::new(0, 0, 1), vec![], vec![0.6], Some(4.2));
        let f = forecast(&fit, &x, 5).unwrap();
        assert_ne!(f.values[0], 4.2);
        for v in &f.values[1..] {
            assert_eq!(*v, 4.2);
        }
    }

    #[test]
    fn constant_mean_model_forecasts_intercept() {
        let fit = fit_with(ArimaOrder::new(0, 0, 0), vec![], vec![], Some(7.5));
        let f = forecast(&fit, &[1.0, 9.0, 7.0, 8.0], 3).unwrap();
        assert_eq!(f.values, vec![7.5; 3]);
        assert_eq!(f.origin_len, 4);
    }

    #[test]
    fn ar1_forecast_closed_form() {
        let x = [10.0, 12.0, 9.0, 11.0, 13.5];
        let (phi, mu) = (0.6, 11.0);
        let fit = fit_with(ArimaOrder::new(1, 0, 0), vec![phi], vec![], Some(mu));
        let f = forecast(&fit, &x, 5).unwrap();
        for (h, v) in f.values.iter().enumerate() {
            let expected = mu + phi.powi(h as i32 + 1) * (13.5 - mu);
            assert!((v - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn differenced_forecast_integrates_back() {
        // ARIMA(0,1,0) has zero mean increments: a random-walk forecast.
        let fit = fit_with(ArimaOrder::new(0, 1, 0), vec![], vec![], None);
        let f = forecast(&fit, &[1.0, 4.0, 2.0, 6.0], 3).unwrap();
        assert_eq!(f.values, vec![6.0; 3]);
        // AR(1) on first differences: increments decay by phi each step.
        let fit = fit_with(ArimaOrder::new(1, 1, 0), vec![0.5], vec![], None);
        let f = forecast(&fit, &[0.0, 2.0, 6.0], 2).unwrap();
        assert!((f.values[0] - 8.0).abs() < 1e-12);
        assert!((f.values[1] - 9.0).abs() < 1e-12);
    }

    #[test]
    fn zero_horizon_is_rejected() {
        let fit = fit_with(ArimaOrder::new(0, 0, 0), vec![], vec![], Some(1.0));
        assert!(forecast(&fit, &[1.0, 2.0], 0).is_err());
    }

    #[test]
    fn forecast_csv_layout() {
        let fit = fit_with(ArimaOrder::new(0, 0, 1), vec![], vec![0.5], Some(2.0));
        let fc = Forecast { horizon: 2, values: vec![1.5, 2.0], origin_len: 10 };
        let mut buf = Vec::new();
        write_forecast_csv(&[("clust1".into(), fit, fc)], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "cluster,model,aic,pred_1,pred_2\nclust1,\"ARIMA(0,0,1)\",0,1.5,2\n");
    }
}
