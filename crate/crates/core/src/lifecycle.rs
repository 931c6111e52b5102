//! Lifecycle staging of cluster centroids and the stage × marketing-element
//! suggestion report.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::clustering::Centroid;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageFeatures {
    pub onset_frac: f64,
    pub slope_norm: f64,
    pub recent_ratio: f64,
    pub peak_frac: f64,
}

/// Dimensionless shape features of a centroid. `alpha` sets the onset level
/// as a fraction of the maximum.
pub fn stage_features(values: &[f64], alpha: f64) -> Result<StageFeatures> {
    if values.is_empty() {
        return Err(Error::EmptyInput("centroid has no points".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("centroid contains non-finite values".into()));
    }
    let n = values.len();
    let nf = n as f64;
    let (peak, max) = values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) });
    let mean = values.iter().sum::<f64>() / nf;
    if max <= 0.0 || mean <= 0.0 {
        return Err(Error::Degenerate("centroid has no positive mass".into()));
    }
    let onset = values.iter().position(|&v| v > alpha * max).unwrap_or(peak);

    let tbar = (nf - 1.0) / 2.0;
    let (sxy, sxx) = values.iter().enumerate().fold((0.0, 0.0), |(sxy, sxx), (t, v)| {
        let dt = t as f64 - tbar;
        (sxy + dt * (v - mean), sxx + dt * dt)
    });
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };

    let tail = n.div_ceil(4);
    let recent = values[n - tail..].iter().sum::<f64>() / tail as f64;
    Ok(StageFeatures {
        onset_frac: onset as f64 / nf,
        slope_norm: slope * nf / mean,
        recent_ratio: recent / mean,
        peak_frac: peak as f64 / nf,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Acquisition,
    Promotion,
    Maturity,
    Recession,
    Departure,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Acquisition, Stage::Promotion, Stage::Maturity, Stage::Recession, Stage::Departure];

    pub fn tag(self) -> &'static str {
        match self {
            Stage::Acquisition => "acquisition",
            Stage::Promotion => "promotion",
            Stage::Maturity => "maturity",
            Stage::Recession => "recession",
            Stage::Departure => "departure",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Stage {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.tag().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown lifecycle stage `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub alpha: f64,
    pub departure: f64,
    pub departure_peak: f64,
    pub trend: f64,
    pub recession: f64,
    pub recession_peak: f64,
    pub onset: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { alpha: 0.05, departure: 0.15, departure_peak: 0.85, trend: 0.5, recession: 0.6, recession_peak: 0.75, onset: 0.4 }
    }
}

/// First matching rule wins: departure, recession, acquisition, promotion,
/// then maturity as the fallback.
pub fn classify_stage(f: &StageFeatures, th: &Thresholds) -> Stage {
    if f.recent_ratio <= th.departure && f.peak_frac < th.departure_peak {
        Stage::Departure
    } else if f.slope_norm < -th.trend || (f.recent_ratio <= th.recession && f.peak_frac < th.recession_peak) {
        Stage::Recession
    } else if f.onset_frac >= th.onset {
        Stage::Acquisition
    } else if f.slope_norm >= th.trend && f.recent_ratio >= 1.0 {
        Stage::Promotion
    } else {
        Stage::Maturity
    }
}

/// Canonical centroid shape for each stage, `len` weeks long.
pub fn archetype(stage: Stage, len: usize) -> Vec<f64> {
    let n = len.max(1) as f64;
    (0..len)
        .map(|t| {
            let u = t as f64 / n;
            match stage {
                // Silent for the first half, then a steady climb.
                Stage::Acquisition => {
                    if u < 0.5 {
                        0.0
                    } else {
                        1.0 + 8.0 * (u - 0.5)
                    }
                }
                Stage::Promotion => 1.0 + 3.0 * u,
                Stage::Maturity => 3.0 + 0.6 * (2.0 * std::f64::consts::PI * 4.0 * u).sin(),
                Stage::Recession => 4.0 - 3.0 * u,
                // Active early, then almost nothing.
                Stage::Departure => {
                    if (0.1..0.45).contains(&u) {
                        4.0
                    } else {
                        0.0
                    }
                }
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Element {
    Segmentation,
    ProductPackage,
    ChannelMix,
    TargetedPromotion,
    LoyaltyMgmt,
}

impl Element {
    pub const ALL: [Element; 5] =
        [Element::Segmentation, Element::ProductPackage, Element::ChannelMix, Element::TargetedPromotion, Element::LoyaltyMgmt];

    pub fn title(self) -> &'static str {
        match self {
            Element::Segmentation => "Segmentation",
            Element::ProductPackage => "Product package",
            Element::ChannelMix => "Channel mix",
            Element::TargetedPromotion => "Targeted promotion",
            Element::LoyaltyMgmt => "Loyalty management",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Suggestion {
    pub id: u32,
    #[serde(default)]
    pub high_value: bool,
    pub text: String,
}

/// Stage × element grid of suggestion ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClvFemMatrix {
    pub suggestions: Vec<Suggestion>,
    pub grid: BTreeMap<Stage, BTreeMap<Element, Vec<u32>>>,
}

const DEFAULT_MATRIX: &str = include_str!("../data/clv_fem.json");

impl Default for ClvFemMatrix {
    fn default() -> Self {
        Self::from_json(DEFAULT_MATRIX).expect("bundled matrix is valid")
    }
}

impl ClvFemMatrix {
    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s)?;
        m.validate()?;
        Ok(m)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Every suggestion is placed somewhere and every placed id exists.
    pub fn validate(&self) -> Result<()> {
        let mut known = BTreeSet::new();
        for s in &self.suggestions {
            if !known.insert(s.id) {
                return Err(Error::Config(format!("duplicate suggestion id {}", s.id)));
            }
        }
        let placed: BTreeSet<u32> = self.grid.values().flat_map(|row| row.values().flatten().copied()).collect();
        if let Some(id) = placed.difference(&known).next() {
            return Err(Error::Config(format!("matrix cell refers to unknown suggestion {id}")));
        }
        if let Some(id) = known.difference(&placed).next() {
            return Err(Error::Config(format!("suggestion {id} is not placed in any cell")));
        }
        Ok(())
    }

    pub fn cell(&self, stage: Stage, element: Element) -> &[u32] {
        self.grid.get(&stage).and_then(|row| row.get(&element)).map_or(&[], Vec::as_slice)
    }

    pub fn suggestion(&self, id: u32) -> Option<&Suggestion> {
        self.suggestions.iter().find(|s| s.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastSummary {
    pub model: String,
    pub aic: f64,
    pub values: Vec<f64>,
}

/// Optional per-cluster context for the report.
#[derive(Debug, Clone, Default)]
pub struct ReportExtras {
    pub features: BTreeMap<usize, StageFeatures>,
    pub centroid_means: BTreeMap<usize, f64>,
    pub forecasts: BTreeMap<usize, ForecastSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppliedSuggestion {
    pub id: u32,
    pub element: Element,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub cluster: usize,
    pub name: String,
    pub stage: Stage,
    pub high_value: bool,
    pub members: Vec<String>,
    pub features: Option<StageFeatures>,
    pub suggestions: Vec<AppliedSuggestion>,
    pub forecast: Option<ForecastSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifecycleReport {
    pub clusters: Vec<ClusterReport>,
    pub matrix: ClvFemMatrix,
}

pub fn cluster_name(c: usize) -> String {
    format!("clust{}", c + 1)
}

pub fn build_report(
    stages: &BTreeMap<usize, Stage>,
    matrix: &ClvFemMatrix,
    membership: &BTreeMap<usize, Vec<String>>,
    extras: &ReportExtras,
) -> Result<LifecycleReport> {
    if let Some(c) = membership.keys().find(|c| !stages.contains_key(c)) {
        return Err(Error::Input(format!("membership refers to unstaged cluster {}", cluster_name(*c))));
    }
    matrix.validate()?;
    let high = high_value_clusters(&extras.centroid_means);
    let clusters = stages
        .iter()
        .map(|(&c, &stage)| {
            let suggestions = Element::ALL
                .into_iter()
                .flat_map(|el| matrix.cell(stage, el).iter().map(move |&id| (el, id)))
                .filter_map(|(element, id)| {
                    matrix.suggestion(id).map(|s| AppliedSuggestion { id, element, text: s.text.clone() })
                })
                .collect();
            ClusterReport {
                cluster: c,
                name: cluster_name(c),
                stage,
                high_value: high.contains(&c),
                members: membership.get(&c).cloned().unwrap_or_default(),
                features: extras.features.get(&c).copied(),
                suggestions,
                forecast: extras.forecasts.get(&c).cloned(),
            }
        })
        .collect();
    Ok(LifecycleReport { clusters, matrix: matrix.clone() })
}

/// Clusters whose centroid mean ranks in the top third.
fn high_value_clusters(means: &BTreeMap<usize, f64>) -> BTreeSet<usize> {
    let mut ranked: Vec<(usize, f64)> = means.iter().map(|(&c, &m)| (c, m)).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let top = ranked.len().div_ceil(3);
    ranked.into_iter().take(top).map(|(c, _)| c).collect()
}

const EMPTY_CELL: &str = "\u{2014}";

impl LifecycleReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::from("# Customer lifecycle report\n\n");
        out.push_str("| Cluster | Stage | Size | High value |\n|---|---|---|---|\n");
        for c in &self.clusters {
            out.push_str(&format!("| {} | {} | {} | {} |\n", c.name, c.stage, c.members.len(), if c.high_value { "yes" } else { "no" }));
        }
        for c in &self.clusters {
            out.push_str(&format!("\n## {} ({})\n\n", c.name, c.stage));
            if c.high_value {
                out.push_str("High-value cluster: centroid mean in the top tercile.\n\n");
            }
            if let Some(f) = &c.features {
                out.push_str(&format!(
                    "Features: onset {:.3}, slope {:.3}, recent ratio {:.3}, peak {:.3}\n\n",
                    f.onset_frac, f.slope_norm, f.recent_ratio, f.peak_frac
                ));
            }
            if let Some(fc) = &c.forecast {
                let vals: Vec<String> = fc.values.iter().map(|v| format!("{v:.4}")).collect();
                out.push_str(&format!("Forecast: {} (AIC {:.4}): {}\n\n", fc.model, fc.aic, vals.join(", ")));
            }
            out.push_str("Suggestions:\n\n");
            if c.suggestions.is_empty() {
                out.push_str(&format!("- {EMPTY_CELL}\n"));
            }
            for s in &c.suggestions {
                let flag = match (self.matrix.suggestion(s.id).is_some_and(|x| x.high_value), c.high_value) {
                    (true, true) => " **(applies: high-value cluster)**",
                    _ => "",
                };
                out.push_str(&format!("- [{}] {}: {}{}\n", s.id, s.element.title(), s.text, flag));
            }
            out.push_str(&format!("\nMembers ({}): {}\n", c.members.len(), if c.members.is_empty() { EMPTY_CELL.to_owned() } else { c.members.join(", ") }));
        }
        out.push_str("\n## Stage × element matrix\n\n| Stage |");
        for el in Element::ALL {
            out.push_str(&format!(" {} |", el.title()));
        }
        out.push_str("\n|---|");
        out.push_str(&"---|".repeat(Element::ALL.len()));
        out.push('\n');
        for st in Stage::ALL {
            out.push_str(&format!("| {st} |"));
            for el in Element::ALL {
                let ids = self.matrix.cell(st, el);
                let cell = if ids.is_empty() {
                    EMPTY_CELL.to_owned()
                } else {
                    ids.iter().map(u32::to_string).collect::<Vec<_>>().join(", ")
                };
                out.push_str(&format!(" {cell} |"));
            }
            out.push('\n');
        }
        out.push_str("\n### Suggestions\n\n");
        for s in &self.matrix.suggestions {
            out.push_str(&format!("{}. {}\n", s.id, s.text));
        }
        out
    }
}

/// Stage every centroid with default feature extraction.
pub fn stage_centroids(centroids: &[Centroid], th: &Thresholds) -> Result<BTreeMap<usize, (Stage, StageFeatures)>> {
    centroids
        .iter()
        .map(|c| {
            let f = stage_features(&c.values, th.alpha)
                .map_err(|e| Error::Degenerate(format!("{}: {e}", cluster_name(c.cluster))))?;
            Ok((c.cluster, (classify_stage(&f, th), f)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn classify(v: &[f64]) -> Stage {
        let th = Thresholds::default();
        classify_stage(&stage_features(v, th.alpha).unwrap(), &th)
    }

    #[test]
    fn late_riser_features() {
        let f = stage_features(&[0.0, 0.0, 0.0, 0.0, 1.0, 2.0, 3.0, 4.0], 0.05).unwrap();
        assert_eq!(f.onset_frac, 0.5);
        assert!(f.slope_norm > 0.0);
        assert_eq!(f.peak_frac, 7.0 / 8.0);
    }

    #[test]
    fn constant_features() {
        let f = stage_features(&[3.0; 10], 0.05).unwrap();
        assert_eq!(f.slope_norm, 0.0);
        assert!((f.recent_ratio - 1.0).abs() < 1e-15);
        assert_eq!(f.onset_frac, 0.0);
    }

    #[test]
    fn falling_features() {
        // OLS slope of [4,3,2,1] on 0..4 is exactly -1; mean 2.5.
        let f = stage_features(&[4.0, 3.0, 2.0, 1.0], 0.05).unwrap();
        assert!((f.slope_norm - (-1.0 * 4.0 / 2.5)).abs() < 1e-12);
        assert_eq!(f.recent_ratio, 1.0 / 2.5);
    }

    #[test]
    fn zero_centroid_is_degenerate() {
        assert!(matches!(stage_features(&[0.0; 5], 0.05), Err(Error::Degenerate(_))));
        assert!(matches!(stage_features(&[], 0.05), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn archetypes_classify_to_their_stage() {
        for st in Stage::ALL {
            let c = archetype(st, 52);
            for k in [0.1, 1.0, 1000.0] {
                let scaled: Vec<f64> = c.iter().map(|v| v * k).collect();
                assert_eq!(classify(&scaled), st, "{st} at scale {k}");
            }
        }
    }

    #[test]
    fn narrated_shapes() {
        let mut late = vec![0.0; 26];
        late.extend((0..26).map(|t| 1.0 + t as f64 * 0.2));
        assert_eq!(classify(&late), Stage::Acquisition);
        let rising: Vec<f64> = (0..52).map(|t| 2.0 + 0.1 * t as f64).collect();
        assert_eq!(classify(&rising), Stage::Promotion);
        let mut burst = vec![0.5; 10];
        burst.extend([6.0; 20]);
        burst.extend([0.0; 22]);
        let f = stage_features(&burst, 0.05).unwrap();
        assert!(f.recent_ratio < 0.15);
        assert_eq!(classify(&burst), Stage::Departure);
    }

    #[test]
    fn rule_order() {
        let th = Thresholds::default();
        let f = |onset_frac, slope_norm, recent_ratio, peak_frac| StageFeatures { onset_frac, slope_norm, recent_ratio, peak_frac };
        // Late onset but collapsed tail: departure outranks acquisition.
        assert_eq!(classify_stage(&f(0.5, 0.0, 0.1, 0.6), &th), Stage::Departure);
        // A collapsed tail with a late peak is not departure.
        assert_eq!(classify_stage(&f(0.0, -1.0, 0.1, 0.9), &th), Stage::Recession);
        assert_eq!(classify_stage(&f(0.5, 1.0, 1.5, 0.9), &th), Stage::Acquisition);
        assert_eq!(classify_stage(&f(0.0, 1.0, 0.99, 0.9), &th), Stage::Maturity);
    }

    proptest! {
        #[test]
        fn scale_invariance(v in proptest::collection::vec(0.0f64..100.0, 8..60), k in 1e-3f64..1e3) {
            prop_assume!(v.iter().sum::<f64>() > 1.0);
            let scaled: Vec<f64> = v.iter().map(|x| x * k).collect();
            let th = Thresholds::default();
            let a = stage_features(&v, th.alpha).unwrap();
            let b = stage_features(&scaled, th.alpha).unwrap();
            prop_assert_eq!(a.onset_frac, b.onset_frac);
            prop_assert_eq!(a.peak_frac, b.peak_frac);
            prop_assert!((a.slope_norm - b.slope_norm).abs() <= 1e-9 * (1.0 + a.slope_norm.abs()));
            prop_assert!((a.recent_ratio - b.recent_ratio).abs() <= 1e-9 * (1.0 + a.recent_ratio));
        }

        #[test]
        fn onset_precedes_peak(v in proptest::collection::vec(0.0f64..100.0, 1..60)) {
            prop_assume!(v.iter().any(|x| *x > 0.0));
            let f = stage_features(&v, 0.05).unwrap();
            prop_assert!(f.onset_frac <= f.peak_frac);
        }
    }

    #[test]
    fn default_matrix_covers_all_ids() {
        let m = ClvFemMatrix::default();
        let placed: BTreeSet<u32> = m.grid.values().flat_map(|r| r.values().flatten().copied()).collect();
        assert_eq!(placed, (1..=9).collect());
        let back = ClvFemMatrix::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn matrix_validation() {
        let mut m = ClvFemMatrix::default();
        m.grid.get_mut(&Stage::Departure).unwrap().remove(&Element::Segmentation);
        assert!(matches!(m.validate(), Err(Error::Config(msg)) if msg.contains('8')));
        let mut m = ClvFemMatrix::default();
        m.grid.get_mut(&Stage::Promotion).unwrap().insert(Element::ChannelMix, vec![12]);
        assert!(m.validate().is_err());
    }

    fn sample_report(stage: Stage) -> LifecycleReport {
        let stages = BTreeMap::from([(0, stage)]);
        let membership = BTreeMap::from([(0, vec!["Acme".to_owned(), "Birch".to_owned()])]);
        build_report(&stages, &ClvFemMatrix::default(), &membership, &ReportExtras::default()).unwrap()
    }

    #[test]
    fn recession_and_departure_suggestions() {
        let ids = |st| -> BTreeSet<u32> { sample_report(st).clusters[0].suggestions.iter().map(|s| s.id).collect() };
        assert_eq!(ids(Stage::Recession), BTreeSet::from([2, 6, 7]));
        assert_eq!(ids(Stage::Departure), BTreeSet::from([8, 9]));
        let r = sample_report(Stage::Recession);
        let md = r.to_markdown();
        let m = ClvFemMatrix::default();
        for id in [2, 6, 7] {
            assert!(md.contains(&m.suggestion(id).unwrap().text));
        }
        assert!(md.contains("Acme, Birch"));
    }

    #[test]
    fn empty_cells_render_as_dash() {
        let md = sample_report(Stage::Maturity).to_markdown();
        let rows: Vec<&str> = md.lines().filter(|l| Stage::ALL.iter().any(|s| l.starts_with(&format!("| {s} |")))).collect();
        assert_eq!(rows.len(), 5);
        for r in rows {
            assert_eq!(r.matches('|').count(), 7, "{r}");
        }
        assert!(md.contains("| acquisition | \u{2014} | \u{2014} | 3 | \u{2014} | \u{2014} |"));
    }

    #[test]
    fn unknown_cluster_in_membership() {
        let stages = BTreeMap::from([(0, Stage::Maturity)]);
        let membership = BTreeMap::from([(3, vec!["X".to_owned()])]);
        let err = build_report(&stages, &ClvFemMatrix::default(), &membership, &ReportExtras::default()).unwrap_err();
        assert!(matches!(err, Error::Input(msg) if msg.contains("clust4")));
    }

    #[test]
    fn high_value_is_top_tercile() {
        let means = BTreeMap::from([(0, 1.0), (1, 9.0), (2, 5.0), (3, 7.0), (4, 2.0), (5, 3.0)]);
        assert_eq!(high_value_clusters(&means), BTreeSet::from([1, 3]));
        let stages: BTreeMap<usize, Stage> = (0..6).map(|c| (c, Stage::Maturity)).collect();
        let extras = ReportExtras { centroid_means: means, ..Default::default() };
        let r = build_report(&stages, &ClvFemMatrix::default(), &BTreeMap::new(), &extras).unwrap();
        let flagged: Vec<usize> = r.clusters.iter().filter(|c| c.high_value).map(|c| c.cluster).collect();
        assert_eq!(flagged, vec![1, 3]);
        let json = r.to_json().unwrap();
        let back: LifecycleReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }
}
