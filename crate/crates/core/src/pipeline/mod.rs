//! The end-to-end pipeline behind the `tsclv` binary. Every step reads its
//! inputs from the workdir, writes its artifacts atomically and records a
//! manifest entry; a step whose inputs are unchanged is skipped.

pub mod config;
pub mod demo;
pub mod store;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::clustering::{centroids, Centroid, ClusteringResult};
use crate::distances::{distance_matrix, DistanceMatrix, Measure, MeasureKind};
use crate::embed::{tsne_embed, TsneParams};
use crate::forecast::{forecast, select_arima, write_forecast_csv, ArimaFit, Forecast};
use crate::ingest::{aggregate_weekly, parse_transactions, SeriesMatrix, WeekId, WeekSpan};
use crate::lifecycle::{build_report, cluster_name, stage_centroids, ClvFemMatrix, ForecastSummary, ReportExtras};
use crate::motif::{find_motifs, MotifResult};
use crate::rng::derive_seed;
use crate::svg::{render_scatter_svg, render_series_svg, Annotations, Highlight};
use crate::validity::{run_grid, score_grid, write_score_table, SchemeFailure, SchemeRun, SchemeScore, SearchOptions};
use crate::{Error, Result};

pub use config::PipelineConfig;
use store::{sha256_hex, write_atomic, ManifestEntry, Workdir};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Step {
    Ingest,
    Distances,
    Cluster,
    Select,
    Embed,
    Motif,
    Forecast,
    Report,
}

impl Step {
    pub const ALL: [Step; 8] =
        [Step::Ingest, Step::Distances, Step::Cluster, Step::Select, Step::Embed, Step::Motif, Step::Forecast, Step::Report];

    pub fn name(self) -> &'static str {
        match self {
            Step::Ingest => "ingest",
            Step::Distances => "distances",
            Step::Cluster => "cluster",
            Step::Select => "select",
            Step::Embed => "embed",
            Step::Motif => "motif",
            Step::Forecast => "forecast",
            Step::Report => "report",
        }
    }
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Step {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Step::ALL
            .into_iter()
            .find(|st| st.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown pipeline step `{s}`")))
    }
}

const STEP_ORDER: [&str; 8] = ["ingest", "distances", "cluster", "select", "embed", "motif", "forecast", "report"];

pub const SERIES_CSV: &str = "series.csv";
pub const SERIES_META: &str = "series.meta";
pub const DISTANCES_JSON: &str = "distances.json";
pub const CLUSTERINGS_JSON: &str = "clusterings.json";
pub const SCORES_JSON: &str = "scores.json";
pub const SELECTED_JSON: &str = "selected.json";
pub const CENTROIDS_CSV: &str = "centroids.csv";
pub const FORECAST_JSON: &str = "forecast.json";

pub fn dist_file(kind: MeasureKind) -> String {
    format!("dist_{}.csv", kind.tag())
}

/// What a step did.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub step: Step,
    pub skipped: bool,
    pub outputs: Vec<String>,
    pub warnings: Vec<String>,
}

/// Artifacts a step is about to write, in write order.
#[derive(Default)]
struct Outputs {
    files: Vec<(String, Vec<u8>)>,
    warnings: Vec<String>,
}

impl Outputs {
    fn add(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.add(name, s.into_bytes());
        Ok(())
    }

    fn with<F>(&mut self, name: &str, write: F) -> Result<()>
    where
        F: FnOnce(&mut Vec<u8>) -> Result<()>,
    {
        let mut buf = Vec::new();
        write(&mut buf)?;
        self.add(name, buf);
        Ok(())
    }
}

/// Inputs gathered before a step runs, keyed by artifact name. External
/// files use `@`-prefixed keys so the manifest does not depend on paths.
#[derive(Default)]
struct Inputs(BTreeMap<String, Vec<u8>>);

impl Inputs {
    fn get(&self, name: &str) -> &[u8] {
        &self.0[name]
    }

    fn text(&self, name: &str) -> Result<&str> {
        std::str::from_utf8(self.get(name)).map_err(|_| Error::Format(format!("{name} is not UTF-8")))
    }
}

pub struct Pipeline {
    pub config: PipelineConfig,
    pub force: bool,
}

impl Pipeline {
    pub fn new(config: PipelineConfig, force: bool) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, force })
    }

    pub fn run(&self, step: Step) -> Result<StepOutcome> {
        let wd = Workdir::open(&self.config.paths.workdir)?;
        self.run_in(&wd, step)
    }

    /// All steps in order under one lock.
    pub fn run_all(&self) -> Result<Vec<StepOutcome>> {
        let wd = Workdir::open(&self.config.paths.workdir)?;
        Step::ALL.iter().map(|&s| self.run_in(&wd, s)).collect()
    }

    fn run_in(&self, wd: &Workdir, step: Step) -> Result<StepOutcome> {
        let inputs = self.gather(wd, step)?;
        let candidate = ManifestEntry {
            step: step.name().to_owned(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
            seed: self.config.seed,
            config: self.config_hash(step)?,
            inputs: inputs.0.iter().map(|(k, v)| (k.clone(), sha256_hex(v))).collect(),
            outputs: BTreeMap::new(),
        };
        if !self.force && wd.up_to_date(&candidate)? {
            let prev = wd.manifest()?.into_iter().find(|e| e.step == step.name());
            let outputs = prev.map(|e| e.outputs.into_keys().collect()).unwrap_or_default();
            return Ok(StepOutcome { step, skipped: true, outputs, warnings: Vec::new() });
        }
        let out = match step {
            Step::Ingest => self.ingest(&inputs)?,
            Step::Distances => self.distances(&inputs)?,
            Step::Cluster => self.cluster(&inputs)?,
            Step::Select => self.select(&inputs)?,
            Step::Embed => self.embed(&inputs)?,
            Step::Motif => self.motif(&inputs)?,
            Step::Forecast => self.forecast(&inputs)?,
            Step::Report => self.report(&inputs)?,
        };
        let mut entry = candidate;
        for (name, bytes) in &out.files {
            write_atomic(&wd.path(name), bytes)?;
            entry.outputs.insert(name.clone(), sha256_hex(bytes));
        }
        // Drop artifacts this step wrote last time but no longer produces.
        if let Some(prev) = wd.manifest()?.into_iter().find(|e| e.step == step.name()) {
            for stale in prev.outputs.keys().filter(|k| !entry.outputs.contains_key(*k)) {
                let _ = std::fs::remove_file(wd.path(stale));
            }
        }
        wd.record(entry, &STEP_ORDER)?;
        Ok(StepOutcome { step, skipped: false, outputs: out.files.into_iter().map(|f| f.0).collect(), warnings: out.warnings })
    }

    fn config_hash(&self, step: Step) -> Result<String> {
        let c = &self.config;
        let section = match step {
            Step::Ingest => json!({ "ingest": c.ingest, "svg": c.output.svg }),
            Step::Distances => json!({ "distances": c.distances }),
            Step::Cluster | Step::Select => json!({ "clustering": c.clustering, "measures": c.distances.measures, "svg": c.output.svg }),
            Step::Embed => json!({ "embed": c.embed, "svg": c.output.svg }),
            Step::Motif => json!({ "motif": c.motif, "svg": c.output.svg }),
            Step::Forecast => json!({ "forecast": c.forecast }),
            Step::Report => json!({ "thresholds": c.lifecycle.thresholds }),
        };
        Ok(sha256_hex(serde_json::to_string(&section)?.as_bytes()))
    }

    /// Read every prerequisite of `step`, failing with the producing step
    /// named when something is missing.
    fn gather(&self, wd: &Workdir, step: Step) -> Result<Inputs> {
        let mut inp = Inputs::default();
        let mut need = |name: &str, producer: Step| -> Result<()> {
            let bytes = wd.require(name, producer.name())?;
            inp.0.insert(name.to_owned(), bytes);
            Ok(())
        };
        let series = |need: &mut dyn FnMut(&str, Step) -> Result<()>| -> Result<()> {
            need(SERIES_CSV, Step::Ingest)?;
            need(SERIES_META, Step::Ingest)
        };
        match step {
            Step::Ingest => {}
            Step::Distances => series(&mut need)?,
            Step::Cluster | Step::Select => {
                need(DISTANCES_JSON, Step::Distances)?;
                let listed: DistanceIndex = serde_json::from_slice(&wd.require(DISTANCES_JSON, "distances")?)?;
                for kind in self.selected_measures(&listed)? {
                    need(&dist_file(kind), Step::Distances)?;
                }
                if step == Step::Select {
                    need(CLUSTERINGS_JSON, Step::Cluster)?;
                    series(&mut need)?;
                }
            }
            Step::Embed => {
                need(SELECTED_JSON, Step::Select)?;
                let sel: Selected = serde_json::from_slice(&wd.require(SELECTED_JSON, "select")?)?;
                need(&dist_file(sel.score.measure), Step::Distances)?;
            }
            Step::Motif => {
                need(CENTROIDS_CSV, Step::Select)?;
                if self.config.motif.per_entity {
                    series(&mut need)?;
                }
            }
            Step::Forecast => need(CENTROIDS_CSV, Step::Select)?,
            Step::Report => {
                need(SELECTED_JSON, Step::Select)?;
                need(CENTROIDS_CSV, Step::Select)?;
                if wd.path(FORECAST_JSON).exists() {
                    need(FORECAST_JSON, Step::Forecast)?;
                }
            }
        }
        let external = |key: &str, path: &std::path::Path, inp: &mut Inputs| -> Result<()> {
            let bytes = std::fs::read(path).map_err(|e| Error::Input(format!("cannot read {}: {e}", path.display())))?;
            inp.0.insert(key.to_owned(), bytes);
            Ok(())
        };
        match step {
            Step::Ingest => external("@input", &self.config.paths.input, &mut inp)?,
            Step::Select => {
                if let Some(p) = &self.config.clustering.sim_ref {
                    external("@sim_ref", p, &mut inp)?;
                }
            }
            Step::Report => {
                if let Some(p) = &self.config.lifecycle.matrix {
                    external("@matrix", p, &mut inp)?;
                }
            }
            _ => {}
        }
        Ok(inp)
    }

    /// Configured measures that the distances step managed to compute.
    fn selected_measures(&self, listed: &DistanceIndex) -> Result<Vec<MeasureKind>> {
        let wanted: Vec<MeasureKind> = self.config.measures()?.iter().map(|m| m.kind).collect();
        let missing: Vec<String> =
            wanted.iter().filter(|k| !listed.attempted().contains(k)).map(|k| k.tag().to_owned()).collect();
        if !missing.is_empty() {
            return Err(Error::Prerequisite {
                artifact: missing.iter().map(|t| format!("dist_{t}.csv")).collect::<Vec<_>>().join(", "),
                producer: "distances".into(),
            });
        }
        Ok(listed.computed.iter().map(|e| e.measure.kind).filter(|k| wanted.contains(k)).collect())
    }

    fn load_series(inp: &Inputs) -> Result<SeriesMatrix> {
        SeriesMatrix::read_csv(inp.get(SERIES_CSV), inp.text(SERIES_META)?)
    }

    fn load_matrices(&self, inp: &Inputs) -> Result<Vec<DistanceMatrix>> {
        let listed: DistanceIndex = serde_json::from_slice(inp.get(DISTANCES_JSON))?;
        let kinds = self.selected_measures(&listed)?;
        listed
            .computed
            .iter()
            .filter(|e| kinds.contains(&e.measure.kind))
            .map(|e| DistanceMatrix::read_csv(inp.get(&dist_file(e.measure.kind)), e.measure))
            .collect()
    }

    fn ingest(&self, inp: &Inputs) -> Result<Outputs> {
        let cfg = &self.config;
        let parsed = parse_transactions(inp.get("@input"), &cfg.ingest.columns, cfg.parse_options())?;
        if parsed.transactions.is_empty() {
            return Err(Error::EmptyInput(format!("no valid transactions ({} rejected rows)", parsed.rejects.len())));
        }
        let weeks = parsed.transactions.iter().map(|t| WeekId::of(&t.timestamp));
        let (lo, hi) = (weeks.clone().min().expect("nonempty"), weeks.max().expect("nonempty"));
        let span: Option<WeekSpan> = cfg.explicit_span(lo, hi)?;
        let sm = aggregate_weekly(&parsed.transactions, span)?;

        let mut out = Outputs::default();
        out.warnings.extend(parsed.warnings.iter().cloned());
        if !parsed.rejects.is_empty() {
            out.warnings.push(format!("{} rows rejected; see ingest.json", parsed.rejects.len()));
        }
        out.with(SERIES_CSV, |b| sm.write_csv(b))?;
        out.add(SERIES_META, sm.metadata().into_bytes());
        let rejects: Vec<_> = parsed.rejects.iter().map(|r| json!({ "row": r.row, "reason": r.reason })).collect();
        out.json(
            "ingest.json",
            &json!({
                "transactions": parsed.transactions.len(),
                "duplicates_dropped": parsed.duplicates_dropped,
                "rejects": rejects,
                "warnings": parsed.warnings,
                "entities": sm.n(),
                "weeks": sm.t(),
                "grid_start": sm.grid_start().to_string(),
            }),
        )?;
        if cfg.output.svg {
            let series: Vec<(String, Vec<f64>)> = sm.series().iter().map(|s| (s.entity_name.clone(), s.values.clone())).collect();
            let svg = render_series_svg("Weekly purchase totals", &series, &Annotations::default())?;
            out.add("series.svg", svg.into_bytes());
        }
        Ok(out)
    }

    fn distances(&self, inp: &Inputs) -> Result<Outputs> {
        let sm = Self::load_series(inp)?;
        let measures = self.config.measures()?;
        let results: Vec<(Measure, Result<DistanceMatrix>)> = measures.iter().map(|m| (*m, distance_matrix(&sm, m))).collect();
        let mut out = Outputs::default();
        let mut index = DistanceIndex::default();
        for (m, res) in results {
            match res {
                Ok(d) => {
                    out.with(&dist_file(m.kind), |b| d.write_csv(b))?;
                    if self.config.distances.binary {
                        out.add(format!("dist_{}.bin", m.kind.tag()), d.to_bytes());
                    }
                    index.computed.push(IndexEntry { measure: m, file: dist_file(m.kind) });
                }
                Err(e) => {
                    out.warnings.push(format!("{}: {e}", m.kind));
                    index.failed.push(FailedMeasure { measure: m, reason: e.to_string() });
                }
            }
        }
        if index.computed.is_empty() {
            return Err(Error::Degenerate("every distance measure failed".into()));
        }
        out.json(DISTANCES_JSON, &index)?;
        Ok(out)
    }

    fn search_options(&self, sm_labels: Option<&[String]>, sim_ref: Option<&[u8]>) -> Result<SearchOptions> {
        let c = &self.config.clustering;
        let reference = match (sim_ref, sm_labels) {
            (Some(bytes), Some(labels)) => Some(read_reference(bytes, labels)?),
            _ => None,
        };
        Ok(SearchOptions {
            criterion: c.criterion,
            linkage: c.linkage,
            fuzzifier: c.fuzzifier,
            max_iter: c.max_iter,
            seed: derive_seed(self.config.seed, "cluster"),
            reference,
        })
    }

    fn check_k_range(&self, n: usize) -> Result<()> {
        let c = &self.config.clustering;
        if c.k_max > n.saturating_sub(1) {
            return Err(Error::Config(format!("K range [{}, {}] exceeds n - 1 = {} entities", c.k_min, c.k_max, n.saturating_sub(1))));
        }
        Ok(())
    }

    fn cluster(&self, inp: &Inputs) -> Result<Outputs> {
        let matrices = self.load_matrices(inp)?;
        self.check_k_range(matrices[0].n())?;
        let c = &self.config.clustering;
        let opts = self.search_options(None, None)?;
        let (runs, failures) = run_grid(&matrices, &c.methods, c.k_min..=c.k_max, &opts);
        if runs.is_empty() {
            return Err(Error::Degenerate("every clustering scheme failed".into()));
        }
        let mut out = Outputs::default();
        out.warnings.extend(failures.iter().map(|f| format!("{} {} K={}: {}", f.method, f.measure, f.k, f.reason)));
        let stored = StoredRuns {
            runs: runs.into_iter().map(|r| StoredRun { measure: r.measure, result: r.result }).collect(),
            failures,
        };
        out.json(CLUSTERINGS_JSON, &stored)?;
        Ok(out)
    }

    fn select(&self, inp: &Inputs) -> Result<Outputs> {
        let matrices = self.load_matrices(inp)?;
        let sm = Self::load_series(inp)?;
        let stored: StoredRuns = serde_json::from_slice(inp.get(CLUSTERINGS_JSON))?;
        let labels = sm.labels();
        let opts = self.search_options(Some(&labels), inp.0.get("@sim_ref").map(Vec::as_slice))?;
        let runs: Vec<SchemeRun> = stored.runs.into_iter().map(|r| SchemeRun { measure: r.measure, result: r.result }).collect();
        let outcome = score_grid(&matrices, runs, &opts)?;
        let chosen = outcome.selected_run().result.clone();

        let mut out = Outputs::default();
        for &method in &self.config.clustering.methods {
            if outcome.scores.iter().any(|s| s.method == method) {
                out.with(&format!("scores_{}.csv", method.tag()), |b| write_score_table(&outcome.scores, method, b))?;
            }
        }
        out.json(
            SCORES_JSON,
            &json!({ "criterion": opts.criterion, "selected": outcome.selected, "scores": outcome.scores, "failures": stored.failures }),
        )?;
        out.json(SELECTED_JSON, &Selected { score: outcome.selected, result: chosen.clone() })?;
        out.with("assignment.csv", |b| chosen.write_assignment_csv(b))?;
        let mut buf = Vec::new();
        if chosen.write_membership_csv(&mut buf)? {
            out.add("membership.csv", buf);
        }
        let mut buf = Vec::new();
        if chosen.write_dendrogram_csv(&mut buf)? {
            out.add("dendrogram.csv", buf);
        }
        let cents = centroids(&sm, &chosen)?;
        let sizes: Vec<usize> = chosen.members().iter().map(Vec::len).collect();
        out.with(CENTROIDS_CSV, |b| write_centroids(&cents, &sizes, b))?;
        if self.config.output.svg {
            let series: Vec<(String, Vec<f64>)> = cents.iter().map(|c| (cluster_name(c.cluster), c.values.clone())).collect();
            let ann = Annotations { groups: Some(cents.iter().map(|c| c.cluster).collect()), highlights: Vec::new() };
            out.add("centroids.svg", render_series_svg("Cluster centroids", &series, &ann)?.into_bytes());
        }
        Ok(out)
    }

    fn embed(&self, inp: &Inputs) -> Result<Outputs> {
        let sel: Selected = serde_json::from_slice(inp.get(SELECTED_JSON))?;
        let measure = sel.result_measure();
        let d = DistanceMatrix::read_csv(inp.get(&dist_file(measure.kind)), measure)?;
        let n = d.n();
        let e = &self.config.embed;
        let mut out = Outputs::default();
        let upper = (n as f64 - 1.0) / 3.0;
        let perplexity = if e.perplexity < upper {
            e.perplexity
        } else {
            // Largest feasible value, kept strictly inside the bound.
            let p = (upper - 1e-6).min(upper * 0.99);
            out.warnings.push(format!("perplexity {} infeasible for {n} entities; using {p:.4}", e.perplexity));
            p
        };
        let params = TsneParams {
            perplexity,
            iterations: e.iterations,
            learning_rate: e.learning_rate,
            seed: derive_seed(self.config.seed, "embed"),
        };
        let emb = tsne_embed(&d, params)?;
        // The matrix may list entities in a different order than the result.
        let assignment: Vec<usize> = emb
            .labels
            .iter()
            .map(|l| {
                sel.result
                    .labels
                    .iter()
                    .position(|x| x == l)
                    .map(|i| sel.result.assignment[i])
                    .ok_or_else(|| Error::Input(format!("entity `{l}` missing from the selected scheme")))
            })
            .collect::<Result<_>>()?;
        out.with("embedding.csv", |b| emb.write_csv(&assignment, b))?;
        out.json("embedding.json", &emb)?;
        if self.config.output.svg {
            let title = format!("t-SNE of {} distances", measure.kind);
            out.add("embedding.svg", render_scatter_svg(&title, &emb.labels, &emb.points, &assignment)?.into_bytes());
        }
        Ok(out)
    }

    fn motif(&self, inp: &Inputs) -> Result<Outputs> {
        let cents = read_centroids(inp.get(CENTROIDS_CSV))?;
        let sax = self.config.sax();
        let mut out = Outputs::default();
        let mut records = Vec::new();
        let mut highlights = Vec::new();
        for (i, c) in cents.iter().enumerate() {
            match find_motifs(&c.values, &sax, self.config.motif.top) {
                Ok(motifs) => {
                    if let Some(m) = motifs.first() {
                        highlights.extend(m.occurrences.iter().map(|&s| Highlight { series: i, start: s, len: sax.window }));
                    }
                    records.push(MotifRecord { cluster: c.cluster, name: cluster_name(c.cluster), motifs, error: None });
                }
                Err(e) => {
                    out.warnings.push(format!("{}: {e}", cluster_name(c.cluster)));
                    records.push(MotifRecord { cluster: c.cluster, name: cluster_name(c.cluster), motifs: Vec::new(), error: Some(e.to_string()) });
                }
            }
        }
        out.json("motifs.json", &json!({ "sax": sax, "clusters": records }))?;
        if self.config.motif.per_entity {
            let sm = Self::load_series(inp)?;
            let entities: Vec<_> = sm
                .series()
                .iter()
                .map(|s| match find_motifs(&s.values, &sax, self.config.motif.top) {
                    Ok(m) => json!({ "entity": s.entity_name, "motifs": m, "error": null }),
                    Err(e) => json!({ "entity": s.entity_name, "motifs": [], "error": e.to_string() }),
                })
                .collect();
            out.json("motifs_entities.json", &json!({ "sax": sax, "entities": entities }))?;
        }
        if self.config.output.svg {
            let series: Vec<(String, Vec<f64>)> = cents.iter().map(|c| (cluster_name(c.cluster), c.values.clone())).collect();
            let ann = Annotations { groups: Some(cents.iter().map(|c| c.cluster).collect()), highlights };
            out.add("motifs.svg", render_series_svg("Centroid motifs", &series, &ann)?.into_bytes());
        }
        Ok(out)
    }

    fn forecast(&self, inp: &Inputs) -> Result<Outputs> {
        let cents = read_centroids(inp.get(CENTROIDS_CSV))?;
        let f = &self.config.forecast;
        let mut out = Outputs::default();
        let mut rows = Vec::new();
        let mut records = Vec::new();
        for c in &cents {
            let name = cluster_name(c.cluster);
            match select_arima(&c.values, f.p_max, f.q_max, f.d_max).and_then(|fit| {
                let fc = forecast(&fit, &c.values, f.horizon)?;
                Ok((fit, fc))
            }) {
                Ok((fit, fc)) => {
                    records.push(ForecastRecord { cluster: c.cluster, name: name.clone(), fit: Some(fit.clone()), forecast: Some(fc.clone()), error: None });
                    rows.push((name, fit, fc));
                }
                Err(e) => {
                    out.warnings.push(format!("{name}: {e}"));
                    records.push(ForecastRecord { cluster: c.cluster, name, fit: None, forecast: None, error: Some(e.to_string()) });
                }
            }
        }
        out.with("forecast.csv", |b| write_forecast_csv(&rows, b))?;
        out.json(FORECAST_JSON, &records)?;
        Ok(out)
    }

    fn report(&self, inp: &Inputs) -> Result<Outputs> {
        let sel: Selected = serde_json::from_slice(inp.get(SELECTED_JSON))?;
        let cents = read_centroids(inp.get(CENTROIDS_CSV))?;
        let matrix = match inp.0.get("@matrix") {
            Some(bytes) => ClvFemMatrix::from_json(std::str::from_utf8(bytes).map_err(|_| Error::Format("matrix file is not UTF-8".into()))?)?,
            None => ClvFemMatrix::default(),
        };
        let th = self.config.lifecycle.thresholds;
        let staged = stage_centroids(&cents, &th)?;
        let stages = staged.iter().map(|(&c, (s, _))| (c, *s)).collect();
        let membership: BTreeMap<usize, Vec<String>> = sel
            .result
            .members()
            .into_iter()
            .enumerate()
            .map(|(c, idx)| (c, idx.into_iter().map(|i| sel.result.labels[i].clone()).collect()))
            .collect();
        let mut extras = ReportExtras {
            features: staged.iter().map(|(&c, (_, f))| (c, *f)).collect(),
            centroid_means: cents.iter().map(|c| (c.cluster, c.values.iter().sum::<f64>() / c.values.len().max(1) as f64)).collect(),
            forecasts: BTreeMap::new(),
        };
        if let Some(bytes) = inp.0.get(FORECAST_JSON) {
            let records: Vec<ForecastRecord> = serde_json::from_slice(bytes)?;
            for r in records {
                if let (Some(fit), Some(fc)) = (r.fit, r.forecast) {
                    extras.forecasts.insert(r.cluster, ForecastSummary { model: fit.order.to_string(), aic: fit.aic, values: fc.values });
                }
            }
        }
        let report = build_report(&stages, &matrix, &membership, &extras)?;
        let mut md = format!(
            "Selected scheme: {} clustering, {} distance, K = {} (Sim {:.4}, silhouette {:.4})\n\n",
            sel.score.method, sel.score.measure, sel.score.k, sel.score.sim, sel.score.silhouette
        );
        md.push_str(&report.to_markdown());
        let mut out = Outputs::default();
        out.add("report.md", md.into_bytes());
        let mut js = report.to_json()?;
        js.push('\n');
        out.add("report.json", js.into_bytes());
        let mut mj = matrix.to_json()?;
        mj.push('\n');
        out.add("clv_fem.json", mj.into_bytes());
        Ok(out)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct IndexEntry {
    measure: Measure,
    file: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FailedMeasure {
    measure: Measure,
    reason: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct DistanceIndex {
    computed: Vec<IndexEntry>,
    failed: Vec<FailedMeasure>,
}

impl DistanceIndex {
    fn attempted(&self) -> Vec<MeasureKind> {
        self.computed.iter().map(|e| e.measure.kind).chain(self.failed.iter().map(|f| f.measure.kind)).collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StoredRun {
    measure: MeasureKind,
    result: ClusteringResult,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StoredRuns {
    runs: Vec<StoredRun>,
    failures: Vec<SchemeFailure>,
}

/// The winning scheme and its partition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Selected {
    pub score: SchemeScore,
    pub result: ClusteringResult,
}

impl Selected {
    fn result_measure(&self) -> Measure {
        Measure::new(self.score.measure)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MotifRecord {
    cluster: usize,
    name: String,
    motifs: Vec<MotifResult>,
    error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ForecastRecord {
    cluster: usize,
    name: String,
    fit: Option<ArimaFit>,
    forecast: Option<Forecast>,
    error: Option<String>,
}

/// `cluster,name,size,week_0..`.
fn write_centroids(cents: &[Centroid], sizes: &[usize], out: &mut Vec<u8>) -> Result<()> {
    let len = cents.first().map_or(0, |c| c.values.len());
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["cluster".to_owned(), "name".to_owned(), "size".to_owned()];
    header.extend((0..len).map(|k| format!("week_{k}")));
    w.write_record(&header)?;
    for c in cents {
        let mut rec = vec![c.cluster.to_string(), cluster_name(c.cluster), sizes.get(c.cluster).copied().unwrap_or(0).to_string()];
        rec.extend(c.values.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn read_centroids(bytes: &[u8]) -> Result<Vec<Centroid>> {
    let mut r = csv::Reader::from_reader(bytes);
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let bad = |what: &str| Error::Format(format!("centroids.csv: bad {what}"));
        let cluster = rec.get(0).and_then(|v| v.parse().ok()).ok_or_else(|| bad("cluster id"))?;
        let values = rec.iter().skip(3).map(|v| v.parse::<f64>().map_err(|_| bad("value"))).collect::<Result<Vec<_>>>()?;
        out.push(Centroid { cluster, values });
    }
    if out.is_empty() {
        return Err(Error::EmptyInput("centroids.csv has no clusters".into()));
    }
    Ok(out)
}

/// Parse an `entity,cluster` CSV into a partition aligned with `labels`.
fn read_reference(bytes: &[u8], labels: &[String]) -> Result<ClusteringResult> {
    let mut r = csv::Reader::from_reader(bytes);
    let mut map = BTreeMap::new();
    for rec in r.records() {
        let rec = rec?;
        let (Some(e), Some(c)) = (rec.get(0), rec.get(1)) else {
            return Err(Error::Format("reference partition rows need entity and cluster".into()));
        };
        map.insert(e.trim().to_owned(), c.trim().to_owned());
    }
    let groups = labels
        .iter()
        .map(|l| map.get(l).cloned().ok_or_else(|| Error::Input(format!("reference partition lacks entity `{l}`"))))
        .collect::<Result<Vec<_>>>()?;
    ClusteringResult::from_groups(labels.to_vec(), &groups)
}

/// Write the demo transaction log and its ground truth into `dir`.
pub fn write_demo(dir: &std::path::Path, seed: u64, spec: &demo::DemoSpec) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let data = demo::generate(seed, spec);
    let tx = dir.join("transactions.csv");
    let truth = dir.join("truth.csv");
    let mut buf = Vec::new();
    data.write_transactions(&mut buf)?;
    write_atomic(&tx, &buf)?;
    let mut buf = Vec::new();
    data.write_truth(&mut buf)?;
    write_atomic(&truth, &buf)?;
    Ok(vec![tx, truth])
}
