//! Pipeline configuration: one TOML file, overridden by the environment and
//! then by command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::clustering::{Linkage, Method};
use crate::distances::{Measure, MeasureKind, MeasureParams};
use crate::ingest::{ColumnMap, ParseOptions, WeekId, WeekSpan};
use crate::lifecycle::Thresholds;
use crate::motif::SaxConfig;
use crate::validity::Criterion;
use crate::{Error, Result};

/// Environment variable that overrides `paths.workdir`.
pub const WORKDIR_ENV: &str = "TSCLV_WORKDIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub input: PathBuf,
    pub workdir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self { input: PathBuf::from("transactions.csv"), workdir: PathBuf::from("tsclv-work") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestSection {
    pub delimiter: char,
    pub dedup: bool,
    pub columns: ColumnMap,
    /// First week of the grid, e.g. `2017-W18`.
    pub start_week: Option<String>,
    /// Last week of the grid (inclusive).
    pub end_week: Option<String>,
}

impl Default for IngestSection {
    fn default() -> Self {
        Self { delimiter: ',', dedup: false, columns: ColumnMap::default(), start_week: None, end_week: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistanceSection {
    pub measures: Vec<String>,
    pub params: MeasureParams,
    /// Also write the binary `TSDM` form of every matrix.
    pub binary: bool,
}

impl Default for DistanceSection {
    fn default() -> Self {
        let tags = ["EUCL", "DTW", "COR", "ACF", "PACF", "PER", "INTPER", "SPECGLK"];
        Self { measures: tags.iter().map(|s| s.to_string()).collect(), params: MeasureParams::default(), binary: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterSection {
    pub methods: Vec<Method>,
    pub k_min: usize,
    pub k_max: usize,
    pub linkage: Linkage,
    pub fuzzifier: f64,
    pub max_iter: usize,
    pub criterion: Criterion,
    /// `entity,cluster` CSV used as the Sim reference instead of the
    /// co-scheme consensus.
    pub sim_ref: Option<PathBuf>,
}

impl Default for ClusterSection {
    fn default() -> Self {
        Self {
            methods: Method::ALL.to_vec(),
            k_min: 2,
            k_max: 10,
            linkage: Linkage::Average,
            fuzzifier: 2.0,
            max_iter: 100,
            criterion: Criterion::Sim,
            sim_ref: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedSection {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
}

impl Default for EmbedSection {
    fn default() -> Self {
        Self { perplexity: 15.0, iterations: 1000, learning_rate: 200.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotifSection {
    pub window: usize,
    pub paa_segments: usize,
    pub alphabet: usize,
    pub projection_iters: usize,
    pub mask_size: usize,
    pub top: usize,
    /// Also mine every entity's raw series.
    pub per_entity: bool,
}

impl Default for MotifSection {
    fn default() -> Self {
        let s = SaxConfig::default();
        Self {
            window: s.window,
            paa_segments: s.paa_segments,
            alphabet: s.alphabet,
            projection_iters: s.projection_iters,
            mask_size: s.mask_size,
            top: 3,
            per_entity: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastSection {
    pub p_max: usize,
    pub d_max: usize,
    pub q_max: usize,
    pub horizon: usize,
}

impl Default for ForecastSection {
    fn default() -> Self {
        Self { p_max: 3, d_max: 1, q_max: 3, horizon: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct LifecycleSection {
    pub thresholds: Thresholds,
    /// JSON stage × element matrix replacing the bundled default.
    pub matrix: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub svg: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { svg: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub paths: Paths,
    pub ingest: IngestSection,
    pub distances: DistanceSection,
    pub clustering: ClusterSection,
    pub embed: EmbedSection,
    pub motif: MotifSection,
    pub forecast: ForecastSection,
    pub lifecycle: LifecycleSection,
    pub output: OutputSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            paths: Paths::default(),
            ingest: IngestSection::default(),
            distances: DistanceSection::default(),
            clustering: ClusterSection::default(),
            embed: EmbedSection::default(),
            motif: MotifSection::default(),
            forecast: ForecastSection::default(),
            lifecycle: LifecycleSection::default(),
            output: OutputSection::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Relative paths inside the file resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            let rebase = |p: &mut PathBuf| {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            };
            rebase(&mut cfg.paths.input);
            rebase(&mut cfg.paths.workdir);
            if let Some(p) = cfg.clustering.sim_ref.as_mut() {
                rebase(p);
            }
            if let Some(p) = cfg.lifecycle.matrix.as_mut() {
                rebase(p);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Schema checks that need no data.
    pub fn validate(&self) -> Result<()> {
        self.measures()?;
        if self.distances.measures.is_empty() {
            return Err(Error::Config("no distance measures configured".into()));
        }
        if self.clustering.methods.is_empty() {
            return Err(Error::Config("no clustering methods configured".into()));
        }
        let c = &self.clustering;
        if c.k_min < 2 || c.k_max < c.k_min {
            return Err(Error::Config(format!("K range [{}, {}] is invalid", c.k_min, c.k_max)));
        }
        if !(c.fuzzifier > 1.0) {
            return Err(Error::Config(format!("fuzzifier {} must exceed 1", c.fuzzifier)));
        }
        if !self.ingest.delimiter.is_ascii() {
            return Err(Error::Config("delimiter must be a single ASCII character".into()));
        }
        self.week_span()?;
        if self.forecast.horizon == 0 {
            return Err(Error::Config("forecast horizon must be at least 1".into()));
        }
        let e = &self.embed;
        if !(e.perplexity > 1.0) || e.iterations == 0 || !(e.learning_rate > 0.0) {
            return Err(Error::Config("embedding needs perplexity > 1, iterations > 0 and a positive learning rate".into()));
        }
        let m = self.sax();
        if m.window < 2 || m.paa_segments == 0 || m.paa_segments > m.window || m.mask_size >= m.paa_segments {
            return Err(Error::Config("motif window/segments/mask are inconsistent".into()));
        }
        if !(2..=10).contains(&m.alphabet) || self.motif.top == 0 || m.projection_iters == 0 {
            return Err(Error::Config("motif alphabet must lie in [2, 10]; top and projection_iters must be positive".into()));
        }
        Ok(())
    }

    pub fn measures(&self) -> Result<Vec<Measure>> {
        let mut kinds: Vec<MeasureKind> = Vec::new();
        for tag in &self.distances.measures {
            let k: MeasureKind = tag.parse()?;
            if kinds.contains(&k) {
                return Err(Error::Config(format!("measure {k} listed twice")));
            }
            kinds.push(k);
        }
        kinds.into_iter().map(|k| Measure::with_params(k, self.distances.params)).collect()
    }

    pub fn parse_options(&self) -> ParseOptions {
        ParseOptions { delimiter: self.ingest.delimiter as u8, dedup: self.ingest.dedup }
    }

    /// Explicit grid span. A lone start week runs to the last transaction,
    /// which is resolved at ingest time.
    pub fn week_span(&self) -> Result<(Option<WeekId>, Option<WeekId>)> {
        let parse = |s: &Option<String>| s.as_deref().map(str::parse::<WeekId>).transpose();
        let start = parse(&self.ingest.start_week).map_err(|e| Error::Config(e.to_string()))?;
        let end = parse(&self.ingest.end_week).map_err(|e| Error::Config(e.to_string()))?;
        if let (Some(s), Some(e)) = (start, end) {
            if e < s {
                return Err(Error::Config(format!("end week {e} precedes start week {s}")));
            }
        }
        Ok((start, end))
    }

    pub fn explicit_span(&self, data_start: WeekId, data_end: WeekId) -> Result<Option<WeekSpan>> {
        Ok(match self.week_span()? {
            (None, None) => None,
            (s, e) => Some(WeekSpan { start: s.unwrap_or(data_start), end: e.unwrap_or(data_end) }),
        })
    }

    pub fn sax(&self) -> SaxConfig {
        let m = &self.motif;
        SaxConfig {
            window: m.window,
            paa_segments: m.paa_segments,
            alphabet: m.alphabet,
            projection_iters: m.projection_iters,
            mask_size: m.mask_size,
            seed: crate::rng::derive_seed(self.seed, "motif"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = PipelineConfig::default();
        let text = cfg.to_toml().unwrap();
        assert_eq!(PipelineConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg = PipelineConfig::from_toml(
            "seed = 7\n[clustering]\nk_max = 6\nmethods = [\"partitional\"]\n[distances]\nmeasures = [\"int.per\", \"dtw\"]\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.clustering.k_max, 6);
        assert_eq!(cfg.clustering.k_min, 2);
        assert_eq!(cfg.clustering.methods, vec![Method::Partitional]);
        let kinds: Vec<MeasureKind> = cfg.measures().unwrap().iter().map(|m| m.kind).collect();
        assert_eq!(kinds, vec![MeasureKind::IntPer, MeasureKind::Dtw]);
        assert_eq!(cfg.forecast.horizon, 3);
    }

    #[test]
    fn schema_violations_are_config_errors() {
        for bad in [
            "[clustering]\nk_min = 1\n",
            "[clustering]\nk_min = 5\nk_max = 4\n",
            "[distances]\nmeasures = [\"LCSS\"]\n",
            "[distances]\nmeasures = [\"DTW\", \"dtw\"]\n",
            "[forecast]\nhorizon = 0\n",
            "[ingest]\nstart_week = \"2017-W60\"\n",
            "[ingest]\nstart_week = \"2018-W02\"\nend_week = \"2018-W01\"\n",
            "[motif]\nmask_size = 4\n",
            "unknown_key = 1\n",
        ] {
            assert!(matches!(PipelineConfig::from_toml(bad), Err(Error::Config(_))), "{bad}");
        }
    }
}
