//! Dissimilarity measures between weekly series.
//!
//! Every measure is a pure function of two slices. [`Measure`] bundles a
//! measure tag with its tuning parameters and dispatches to the right
//! function; [`distance_matrix`] fills a full symmetric matrix.

mod autocorr;
mod elastic;
mod lockstep;
mod matrix;
mod shape;
mod spectral;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use autocorr::{acf_dist, autocorrelations, partial_autocorrelations};
pub use elastic::{dtw, sdtw};
pub use lockstep::{cor_dist, eucl, pearson};
pub use matrix::{distance_matrix, DistanceMatrix};
pub use shape::sbd;
pub use spectral::{intper_dist, normalized_periodogram, per_dist, periodogram, specglk_dist};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MeasureKind {
    Eucl,
    Dtw,
    Sdtw,
    Sbd,
    Cor,
    Acf,
    Pacf,
    Per,
    IntPer,
    SpecGlk,
}

impl MeasureKind {
    pub const ALL: [MeasureKind; 10] = [
        MeasureKind::Eucl,
        MeasureKind::Dtw,
        MeasureKind::Sdtw,
        MeasureKind::Sbd,
        MeasureKind::Cor,
        MeasureKind::Acf,
        MeasureKind::Pacf,
        MeasureKind::Per,
        MeasureKind::IntPer,
        MeasureKind::SpecGlk,
    ];

    pub fn tag(&self) -> &'static str {
        match self {
            MeasureKind::Eucl => "EUCL",
            MeasureKind::Dtw => "DTW",
            MeasureKind::Sdtw => "SDTW",
            MeasureKind::Sbd => "SBD",
            MeasureKind::Cor => "COR",
            MeasureKind::Acf => "ACF",
            MeasureKind::Pacf => "PACF",
            MeasureKind::Per => "PER",
            MeasureKind::IntPer => "INTPER",
            MeasureKind::SpecGlk => "SPECGLK",
        }
    }

    /// Soft-DTW values can be negative and do not vanish on the diagonal.
    pub fn is_nonmetric(&self) -> bool {
        matches!(self, MeasureKind::Sdtw)
    }
}

impl fmt::Display for MeasureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for MeasureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_uppercase();
        MeasureKind::ALL
            .into_iter()
            .find(|m| m.tag() == norm)
            .ok_or_else(|| Error::Config(format!("unknown distance measure `{s}`")))
    }
}

/// Tuning knobs shared by the measures; each measure reads only its own.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MeasureParams {
    /// ACF/PACF lag count. `None` picks `min(len / 4, 25)`.
    pub lag: Option<usize>,
    /// Soft-DTW smoothing.
    pub gamma: f64,
    /// Sakoe-Chiba half-width for DTW; 0 means unconstrained.
    pub window: usize,
    /// SPEC.GLK smoothing bandwidth as a fraction of the frequency range.
    pub bandwidth: f64,
}

impl Default for MeasureParams {
    fn default() -> Self {
        Self { lag: None, gamma: 1.0, window: 0, bandwidth: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measure {
    pub kind: MeasureKind,
    pub params: MeasureParams,
}

impl Measure {
    pub fn new(kind: MeasureKind) -> Self {
        Self { kind, params: MeasureParams::default() }
    }

    pub fn with_params(kind: MeasureKind, params: MeasureParams) -> Result<Self> {
        let m = Self { kind, params };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.params;
        if p.lag == Some(0) {
            return Err(Error::Config("lag must be at least 1".into()));
        }
        if !(p.gamma > 0.0) {
            return Err(Error::Config(format!("soft-DTW gamma must be positive, got {}", p.gamma)));
        }
        if !(p.bandwidth > 0.0 && p.bandwidth <= 0.5) {
            return Err(Error::Config(format!("GLK bandwidth must lie in (0, 0.5], got {}", p.bandwidth)));
        }
        Ok(())
    }

    /// Lag count actually used for series of length `len`.
    pub fn lag_for(&self, len: usize) -> usize {
        self.params.lag.unwrap_or_else(|| default_lag(len))
    }

    pub fn distance(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.validate()?;
        match self.kind {
            MeasureKind::Eucl => eucl(x, y),
            MeasureKind::Dtw => dtw(x, y, self.params.window),
            MeasureKind::Sdtw => sdtw(x, y, self.params.gamma),
            MeasureKind::Sbd => sbd(x, y),
            MeasureKind::Cor => cor_dist(x, y),
            MeasureKind::Acf => acf_dist(x, y, self.lag_for(x.len().min(y.len())), false),
            MeasureKind::Pacf => acf_dist(x, y, self.lag_for(x.len().min(y.len())), true),
            MeasureKind::Per => per_dist(x, y),
            MeasureKind::IntPer => intper_dist(x, y),
            MeasureKind::SpecGlk => specglk_dist(x, y, self.params.bandwidth),
        }
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.kind)
    }
}

pub fn default_lag(len: usize) -> usize {
    (len / 4).clamp(1, 25)
}

pub(crate) fn check_same_len(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("series lengths differ: {} vs {}", x.len(), y.len())));
    }
    if x.is_empty() {
        return Err(Error::Shape("empty series".into()));
    }
    Ok(())
}

pub(crate) fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}
