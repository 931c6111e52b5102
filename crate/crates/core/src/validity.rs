//! Clustering validity indices and the scheme-grid search.
//!
//! A scheme is one (method, measure, K) combination. [`scheme_search`]
//! clusters every scheme and scores it with the Sim index against the
//! other schemes at the same K (or against a reference partition), along
//! with silhouette and variation of information.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::{cluster, ClusteringConfig, ClusteringResult, Linkage, Method};
use crate::distances::{distance_matrix, DistanceMatrix, Measure, MeasureKind};
use crate::ingest::SeriesMatrix;
use crate::{Error, Result};

/// Positions of `b`'s entities in `a`'s order, or an input error.
fn aligned(a: &ClusteringResult, b: &ClusteringResult) -> Result<Vec<usize>> {
    if a.labels.len() != b.labels.len() {
        return Err(Error::Input(format!(
            "partitions cover different entity sets ({} vs {} entities)",
            a.labels.len(),
            b.labels.len()
        )));
    }
    if a.labels == b.labels {
        return Ok(b.assignment.clone());
    }
    let pos: HashMap<&str, usize> = b.labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    a.labels
        .iter()
        .map(|l| {
            pos.get(l.as_str())
                .map(|&i| b.assignment[i])
                .ok_or_else(|| Error::Input(format!("entity `{l}` missing from second partition")))
        })
        .collect()
}

/// Contingency counts with compacted cluster ids.
fn contingency(a: &[usize], b: &[usize]) -> (Vec<usize>, Vec<usize>, BTreeMap<(usize, usize), usize>) {
    let compact = |x: &[usize]| {
        let mut ids: HashMap<usize, usize> = HashMap::new();
        let mut sizes = Vec::new();
        let out: Vec<usize> = x
            .iter()
            .map(|c| {
                let next = ids.len();
                let id = *ids.entry(*c).or_insert(next);
                if id == sizes.len() {
                    sizes.push(0);
                }
                sizes[id] += 1;
                id
            })
            .collect();
        (out, sizes)
    };
    let (ca, sa) = compact(a);
    let (cb, sb) = compact(b);
    let mut table = BTreeMap::new();
    for (x, y) in ca.into_iter().zip(cb) {
        *table.entry((x, y)).or_insert(0) += 1;
    }
    (sa, sb, table)
}

/// Sim(A, B) = (1/K_A) * sum_i max_j 2|A_i & B_j| / (|A_i| + |B_j|).
///
/// Not symmetric when the cluster counts differ. Fuzzy results are used
/// through their argmax assignment.
pub fn sim_index(a: &ClusteringResult, b: &ClusteringResult) -> Result<f64> {
    let bb = aligned(a, b)?;
    Ok(sim_of_assignments(&a.assignment, &bb))
}

pub(crate) fn sim_of_assignments(a: &[usize], b: &[usize]) -> f64 {
    let (sa, sb, table) = contingency(a, b);
    let mut best = vec![0.0f64; sa.len()];
    for (&(i, j), &c) in &table {
        let s = 2.0 * c as f64 / (sa[i] + sb[j]) as f64;
        best[i] = best[i].max(s);
    }
    best.iter().sum::<f64>() / sa.len() as f64
}

/// VI = H(A) + H(B) - 2 I(A; B), natural logarithms.
pub fn variation_of_information(a: &ClusteringResult, b: &ClusteringResult) -> Result<f64> {
    let bb = aligned(a, b)?;
    Ok(vi_of_assignments(&a.assignment, &bb))
}

pub(crate) fn vi_of_assignments(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len() as f64;
    let (sa, sb, table) = contingency(a, b);
    let h = |sizes: &[usize]| -> f64 {
        sizes.iter().map(|&s| s as f64 / n).map(|p| -p * p.ln()).sum()
    };
    let mi: f64 = table
        .iter()
        .map(|(&(i, j), &c)| {
            let p = c as f64 / n;
            p * (p * n * n / (sa[i] as f64 * sb[j] as f64)).ln()
        })
        .sum();
    (h(&sa) + h(&sb) - 2.0 * mi).max(0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SilhouetteReport {
    pub mean: f64,
    pub values: Vec<f64>,
    pub warning: Option<String>,
}

/// Per-entity silhouettes and their mean. Singleton clusters score 0.
pub fn silhouette_report(d: &DistanceMatrix, c: &ClusteringResult) -> Result<SilhouetteReport> {
    let n = d.n();
    if c.n() != n {
        return Err(Error::Shape(format!("assignment covers {} entities, matrix has {n}", c.n())));
    }
    let shifted;
    let d = if d.nonmetric() {
        shifted = d.nonnegative();
        &shifted
    } else {
        d
    };
    let k = c.assignment.iter().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; k];
    for &a in &c.assignment {
        sizes[a] += 1;
    }
    if sizes.iter().any(|&s| s == 0) {
        return Err(Error::Input("silhouette needs every cluster non-empty".into()));
    }
    let values: Vec<f64> = (0..n)
        .map(|i| {
            let own = c.assignment[i];
            if sizes[own] == 1 {
                return 0.0;
            }
            let mut sums = vec![0.0; k];
            for j in (0..n).filter(|&j| j != i) {
                sums[c.assignment[j]] += d.get(i, j);
            }
            let a = sums[own] / (sizes[own] - 1) as f64;
            let b = (0..k)
                .filter(|&q| q != own)
                .map(|q| sums[q] / sizes[q] as f64)
                .fold(f64::INFINITY, f64::min);
            let m = a.max(b);
            if m <= 0.0 || !b.is_finite() {
                0.0
            } else {
                (b - a) / m
            }
        })
        .collect();
    let warning = (k == n).then(|| "every cluster is a singleton; silhouette is 0".to_owned());
    Ok(SilhouetteReport { mean: values.iter().sum::<f64>() / n as f64, values, warning })
}

pub fn silhouette(d: &DistanceMatrix, c: &ClusteringResult) -> Result<f64> {
    Ok(silhouette_report(d, c)?.mean)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    #[default]
    Sim,
    Silhouette,
}

impl std::str::FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sim" => Ok(Criterion::Sim),
            "silhouette" => Ok(Criterion::Silhouette),
            _ => Err(Error::Config(format!("unknown selection criterion `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeScore {
    pub method: Method,
    pub measure: MeasureKind,
    pub k: usize,
    pub sim: f64,
    pub silhouette: f64,
    pub vi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeFailure {
    pub method: Method,
    pub measure: MeasureKind,
    pub k: usize,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct SearchOptions {
    pub criterion: Criterion,
    pub linkage: Linkage,
    pub fuzzifier: f64,
    pub max_iter: usize,
    pub seed: u64,
    /// Score Sim against this partition instead of the co-scheme consensus.
    pub reference: Option<ClusteringResult>,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            criterion: Criterion::Sim,
            linkage: Linkage::Average,
            fuzzifier: 2.0,
            max_iter: 100,
            seed: 42,
            reference: None,
        }
    }
}

/// One clustered scheme ready for scoring.
#[derive(Debug, Clone)]
pub struct SchemeRun {
    pub measure: MeasureKind,
    pub result: ClusteringResult,
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub scores: Vec<SchemeScore>,
    pub failures: Vec<SchemeFailure>,
    pub selected: SchemeScore,
    pub runs: Vec<SchemeRun>,
}

impl SearchOutcome {
    pub fn selected_run(&self) -> &SchemeRun {
        self.runs
            .iter()
            .find(|r| {
                r.measure == self.selected.measure
                    && r.result.config.method == self.selected.method
                    && r.result.k() == self.selected.k
            })
            .expect("selected scheme has a run")
    }
}

/// Cluster every (method, measure, K) combination over precomputed matrices.
pub fn run_grid(
    matrices: &[DistanceMatrix],
    methods: &[Method],
    ks: std::ops::RangeInclusive<usize>,
    opts: &SearchOptions,
) -> (Vec<SchemeRun>, Vec<SchemeFailure>) {
    let jobs: Vec<(usize, Method, usize)> = (0..matrices.len())
        .flat_map(|mi| {
            let ks = ks.clone();
            methods.iter().flat_map(move |&me| ks.clone().map(move |k| (mi, me, k)))
        })
        .collect();
    let outcomes: Vec<_> = jobs
        .par_iter()
        .map(|&(mi, method, k)| {
            let d = &matrices[mi];
            let cfg = ClusteringConfig {
                method,
                k,
                linkage: opts.linkage,
                fuzzifier: opts.fuzzifier,
                max_iter: opts.max_iter,
                tol: 1e-9,
                seed: opts.seed,
            };
            cluster(d, &cfg).map(|result| SchemeRun { measure: d.measure().kind, result }).map_err(|e| SchemeFailure {
                method,
                measure: d.measure().kind,
                k,
                reason: e.to_string(),
            })
        })
        .collect();
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => runs.push(r),
            Err(f) => failures.push(f),
        }
    }
    (runs, failures)
}

/// Score clustered schemes and pick the winner. `matrices` must contain the
/// matrix for every measure that appears in `runs`.
pub fn score_grid(matrices: &[DistanceMatrix], runs: Vec<SchemeRun>, opts: &SearchOptions) -> Result<SearchOutcome> {
    if runs.len() < 2 && opts.reference.is_none() {
        return Err(Error::Config("scheme search needs at least two successful schemes".into()));
    }
    let mut runs = runs;
    runs.sort_by(|a, b| {
        (a.result.config.method, a.measure, a.result.k()).cmp(&(b.result.config.method, b.measure, b.result.k()))
    });
    let scores = runs
        .par_iter()
        .enumerate()
        .map(|(idx, run)| {
            let d = matrices
                .iter()
                .find(|m| m.measure().kind == run.measure)
                .ok_or_else(|| Error::Input(format!("no matrix for measure {}", run.measure)))?;
            let peers: Vec<&SchemeRun> = runs
                .iter()
                .enumerate()
                .filter(|(j, r)| *j != idx && r.result.k() == run.result.k())
                .map(|(_, r)| r)
                .collect();
            let (sim, vi) = match &opts.reference {
                Some(reference) => (sim_index(&run.result, reference)?, variation_of_information(&run.result, reference)?),
                None if peers.is_empty() => (0.0, 0.0),
                None => {
                    let mut s = 0.0;
                    let mut v = 0.0;
                    for p in &peers {
                        s += sim_index(&run.result, &p.result)?;
                        v += variation_of_information(&run.result, &p.result)?;
                    }
                    (s / peers.len() as f64, v / peers.len() as f64)
                }
            };
            Ok(SchemeScore {
                method: run.result.config.method,
                measure: run.measure,
                k: run.result.k(),
                sim,
                silhouette: silhouette(d, &run.result)?,
                vi,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let selected = *select(&scores, opts.criterion).ok_or_else(|| Error::Input("no scheme to select".into()))?;
    Ok(SearchOutcome { scores, failures: Vec::new(), selected, runs })
}

/// Argmax of the criterion; ties go to higher silhouette, then lower K,
/// then the first in (method, measure) order.
pub fn select(scores: &[SchemeScore], criterion: Criterion) -> Option<&SchemeScore> {
    let key = |s: &SchemeScore| match criterion {
        Criterion::Sim => s.sim,
        Criterion::Silhouette => s.silhouette,
    };
    scores.iter().reduce(|best, s| {
        let ord = key(s)
            .total_cmp(&key(best))
            .then(s.silhouette.total_cmp(&best.silhouette))
            .then(best.k.cmp(&s.k))
            .then((best.method, best.measure).cmp(&(s.method, s.measure)));
        if ord.is_gt() {
            s
        } else {
            best
        }
    })
}

/// Compute matrices, cluster the whole grid and score it.
pub fn scheme_search(
    sm: &SeriesMatrix,
    methods: &[Method],
    measures: &[Measure],
    ks: std::ops::RangeInclusive<usize>,
    opts: &SearchOptions,
) -> Result<SearchOutcome> {
    let n = sm.n();
    if *ks.start() < 2 || *ks.end() > n.saturating_sub(1) || ks.is_empty() {
        return Err(Error::Config(format!("K range {ks:?} must lie within [2, {}]", n.saturating_sub(1))));
    }
    let mut matrices = Vec::new();
    let mut failures = Vec::new();
    for m in measures {
        match distance_matrix(sm, m) {
            Ok(d) => matrices.push(d),
            Err(e) => {
                for &method in methods {
                    for k in ks.clone() {
                        failures.push(SchemeFailure { method, measure: m.kind, k, reason: e.to_string() });
                    }
                }
            }
        }
    }
    let (runs, mut grid_failures) = run_grid(&matrices, methods, ks, opts);
    failures.append(&mut grid_failures);
    let mut outcome = score_grid(&matrices, runs, opts)?;
    failures.sort_by(|a, b| (a.method, a.measure, a.k).cmp(&(b.method, b.measure, b.k)));
    outcome.failures = failures;
    Ok(outcome)
}

/// One CSV per method: rows are K, columns are measures, cells are Sim.
pub fn write_score_table<W: Write>(scores: &[SchemeScore], method: Method, out: W) -> Result<()> {
    let mut measures: Vec<MeasureKind> = scores.iter().filter(|s| s.method == method).map(|s| s.measure).collect();
    measures.sort();
    measures.dedup();
    let mut ks: Vec<usize> = scores.iter().filter(|s| s.method == method).map(|s| s.k).collect();
    ks.sort();
    ks.dedup();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["K".to_owned()];
    header.extend(measures.iter().map(|m| m.tag().to_owned()));
    w.write_record(&header)?;
    for k in ks {
        let mut rec = vec![k.to_string()];
        for m in &measures {
            let cell = scores
                .iter()
                .find(|s| s.method == method && s.measure == *m && s.k == k)
                .map(|s| s.sim.to_string())
                .unwrap_or_default();
            rec.push(cell);
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
