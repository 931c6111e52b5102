//! Partitioning a [`DistanceMatrix`] into K clusters.
//!
//! Three algorithms work directly on the precomputed matrix: agglomerative
//! hierarchical clustering ([`hier_cluster`]), k-medoids PAM
//! ([`pam_cluster`]) and fuzzy c-medoids ([`fuzzy_cmedoids`]). All return a
//! [`ClusteringResult`] whose cluster indices are canonical: cluster 0 holds
//! entity 0, and further clusters are numbered by first appearance.

mod fuzzy;
mod hierarchical;
mod pam;

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use fuzzy::fuzzy_cmedoids;
pub use hierarchical::hier_cluster;
pub use pam::pam_cluster;

use crate::distances::DistanceMatrix;
use crate::ingest::SeriesMatrix;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Hierarchical,
    Partitional,
    Fuzzy,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Hierarchical, Method::Partitional, Method::Fuzzy];

    pub fn tag(&self) -> &'static str {
        match self {
            Method::Hierarchical => "hierarchical",
            Method::Partitional => "partitional",
            Method::Fuzzy => "fuzzy",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "hierarchical" | "hier" => Ok(Method::Hierarchical),
            "partitional" | "pam" => Ok(Method::Partitional),
            "fuzzy" => Ok(Method::Fuzzy),
            _ => Err(Error::Config(format!("unknown clustering method `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Linkage {
    Average,
    Complete,
    Single,
}

impl FromStr for Linkage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "average" => Ok(Linkage::Average),
            "complete" => Ok(Linkage::Complete),
            "single" => Ok(Linkage::Single),
            _ => Err(Error::Config(format!("unknown linkage `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusteringConfig {
    pub method: Method,
    pub k: usize,
    pub linkage: Linkage,
    pub fuzzifier: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
}

impl ClusteringConfig {
    pub fn new(method: Method, k: usize) -> Self {
        Self { method, k, linkage: Linkage::Average, fuzzifier: 2.0, max_iter: 100, tol: 1e-9, seed: 42 }
    }
}

/// One step of an agglomerative merge sequence. Ids below `n` are
/// entities; id `n + s` is the cluster formed at step `s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringResult {
    pub config: ClusteringConfig,
    pub labels: Vec<String>,
    pub assignment: Vec<usize>,
    /// `n x K` fuzzy memberships, rows summing to one.
    pub membership: Option<Vec<Vec<f64>>>,
    pub medoids: Option<Vec<usize>>,
    pub dendrogram: Option<Vec<Merge>>,
    /// Final objective (PAM total distance, fuzzy weighted objective).
    pub cost: Option<f64>,
    /// Objective after each pass, for descent diagnostics.
    pub trace: Vec<f64>,
    pub warnings: Vec<String>,
}

impl ClusteringResult {
    pub fn k(&self) -> usize {
        self.config.k
    }

    pub fn n(&self) -> usize {
        self.assignment.len()
    }

    /// Entity indices per cluster.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k()];
        for (i, &c) in self.assignment.iter().enumerate() {
            out[c].push(i);
        }
        out
    }

    /// Crisp result from an external labelling, e.g. a reference partition.
    /// Group names are numbered by first appearance.
    pub fn from_groups<S: AsRef<str>>(labels: Vec<String>, groups: &[S]) -> Result<Self> {
        if labels.len() != groups.len() {
            return Err(Error::Shape(format!("{} labels but {} group tags", labels.len(), groups.len())));
        }
        if labels.is_empty() {
            return Err(Error::EmptyInput("no entities in partition".into()));
        }
        let mut names: Vec<&str> = Vec::new();
        let assignment = groups
            .iter()
            .map(|g| match names.iter().position(|n| *n == g.as_ref()) {
                Some(i) => i,
                None => {
                    names.push(g.as_ref());
                    names.len() - 1
                }
            })
            .collect();
        Ok(Self {
            config: ClusteringConfig::new(Method::Partitional, names.len()),
            labels,
            assignment,
            membership: None,
            medoids: None,
            dendrogram: None,
            cost: None,
            trace: Vec::new(),
            warnings: Vec::new(),
        })
    }

    pub fn write_assignment_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["entity", "cluster"])?;
        for (l, c) in self.labels.iter().zip(&self.assignment) {
            w.write_record([l.as_str(), &c.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes nothing and returns `false` when there are no memberships.
    pub fn write_membership_csv<W: Write>(&self, out: W) -> Result<bool> {
        let Some(u) = &self.membership else { return Ok(false) };
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["entity".to_owned()];
        header.extend((0..self.k()).map(|k| format!("u_{k}")));
        w.write_record(&header)?;
        for (l, row) in self.labels.iter().zip(u) {
            let mut rec = vec![l.clone()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(true)
    }

    pub fn write_dendrogram_csv<W: Write>(&self, out: W) -> Result<bool> {
        let Some(merges) = &self.dendrogram else { return Ok(false) };
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["step", "left", "right", "height"])?;
        for (s, m) in merges.iter().enumerate() {
            w.write_record([s.to_string(), m.left.to_string(), m.right.to_string(), m.height.to_string()])?;
        }
        w.flush()?;
        Ok(true)
    }
}

/// Run the method named in `config`.
pub fn cluster(d: &DistanceMatrix, config: &ClusteringConfig) -> Result<ClusteringResult> {
    let mut res = match config.method {
        Method::Hierarchical => hier_cluster(d, config.k, config.linkage)?,
        Method::Partitional => pam_cluster(d, config.k, config.seed, config.max_iter)?,
        Method::Fuzzy => fuzzy_cmedoids(d, config.k, config.fuzzifier, config.seed, config.max_iter, config.tol)?,
    };
    res.config = *config;
    Ok(res)
}

pub(crate) fn check_k(d: &DistanceMatrix, k: usize) -> Result<()> {
    if k < 2 || k > d.n() {
        return Err(Error::Config(format!("K = {k} must lie in [2, {}]", d.n())));
    }
    Ok(())
}

/// Renumber clusters by first appearance; returns old -> new map.
pub(crate) fn canonicalize(assignment: &mut [usize], k: usize) -> Vec<usize> {
    let mut map = vec![usize::MAX; k];
    let mut next = 0;
    for c in assignment.iter_mut() {
        if map[*c] == usize::MAX {
            map[*c] = next;
            next += 1;
        }
        *c = map[*c];
    }
    for m in map.iter_mut().filter(|m| **m == usize::MAX) {
        *m = next;
        next += 1;
    }
    map
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Centroid {
    pub cluster: usize,
    pub values: Vec<f64>,
}

/// Pointwise mean series of each cluster's members.
pub fn centroids(sm: &SeriesMatrix, c: &ClusteringResult) -> Result<Vec<Centroid>> {
    if c.n() != sm.n() {
        return Err(Error::Shape(format!("assignment covers {} entities, series matrix has {}", c.n(), sm.n())));
    }
    let t = sm.t();
    let mut sums = vec![vec![0.0; t]; c.k()];
    let mut counts = vec![0usize; c.k()];
    for (i, &k) in c.assignment.iter().enumerate() {
        counts[k] += 1;
        for (s, v) in sums[k].iter_mut().zip(sm.row(i)) {
            *s += v;
        }
    }
    sums.into_iter()
        .zip(counts)
        .enumerate()
        .map(|(k, (s, cnt))| {
            if cnt == 0 {
                return Err(Error::Input(format!("cluster {k} is empty")));
            }
            Ok(Centroid { cluster: k, values: s.into_iter().map(|v| v / cnt as f64).collect() })
        })
        .collect()
}

#[cfg(test)]
pub(crate) mod testutil {
    use crate::distances::{DistanceMatrix, Measure, MeasureKind};

    /// Euclidean matrix of 1-D points.
    pub fn points(xs: &[f64]) -> DistanceMatrix {
        let n = xs.len();
        let labels = (0..n).map(|i| format!("p{i}")).collect();
        let data = xs.iter().flat_map(|a| xs.iter().map(move |b| (a - b).abs())).collect();
        DistanceMatrix::from_raw(Measure::new(MeasureKind::Eucl), labels, data).unwrap()
    }

    pub fn co_membership(a: &[usize]) -> Vec<bool> {
        a.iter().flat_map(|x| a.iter().map(move |y| x == y)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn result_with(assignment: Vec<usize>, k: usize) -> ClusteringResult {
        ClusteringResult {
            config: ClusteringConfig::new(Method::Partitional, k),
            labels: (0..assignment.len()).map(|i| format!("e{i}")).collect(),
            assignment,
            membership: None,
            medoids: None,
            dendrogram: None,
            cost: None,
            trace: vec![],
            warnings: vec![],
        }
    }

    #[test]
    fn centroid_of_pair_and_singleton() {
        let sm = SeriesMatrix::from_rows(
            vec!["a".into(), "b".into(), "c".into()],
            vec![vec![0.0, 0.0], vec![2.0, 4.0], vec![7.0, 1.0]],
        )
        .unwrap();
        let c = centroids(&sm, &result_with(vec![0, 0, 1], 2)).unwrap();
        assert_eq!(c[0].values, vec![1.0, 2.0]);
        assert_eq!(c[1].values, vec![7.0, 1.0]);
    }

    #[test]
    fn centroids_match_loop_oracle() {
        let mut rng = crate::rng::seeded(77);
        let n = 40;
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..12).map(|_| rng.random_range(0.0..9.0)).collect()).collect();
        let mut assignment: Vec<usize> = (0..n).map(|i| i % 5).collect();
        for a in assignment.iter_mut().skip(5) {
            *a = rng.random_range(0..5);
        }
        let sm = SeriesMatrix::from_rows((0..n).map(|i| format!("e{i}")).collect(), rows.clone()).unwrap();
        let got = centroids(&sm, &result_with(assignment.clone(), 5)).unwrap();
        for k in 0..5 {
            for t in 0..12 {
                let mut s = 0.0;
                let mut c = 0.0;
                for i in 0..n {
                    if assignment[i] == k {
                        s += rows[i][t];
                        c += 1.0;
                    }
                }
                assert!((got[k].values[t] - s / c).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn canonical_labels_follow_first_appearance() {
        let mut a = vec![2, 2, 0, 1, 0];
        canonicalize(&mut a, 3);
        assert_eq!(a, vec![0, 0, 1, 2, 1]);
    }

    #[test]
    fn csv_writers() {
        let mut r = result_with(vec![0, 1], 2);
        r.membership = Some(vec![vec![0.75, 0.25], vec![0.0, 1.0]]);
        let mut buf = Vec::new();
        r.write_assignment_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "entity,cluster\ne0,0\ne1,1\n");
        let mut buf = Vec::new();
        assert!(r.write_membership_csv(&mut buf).unwrap());
        assert_eq!(String::from_utf8(buf).unwrap(), "entity,u_0,u_1\ne0,0.75,0.25\ne1,0,1\n");
        assert!(!r.write_dendrogram_csv(Vec::new()).unwrap());
    }

    #[test]
    fn method_tags_parse() {
        for m in Method::ALL {
            assert_eq!(m.tag().parse::<Method>().unwrap(), m);
        }
        assert!("kmeans".parse::<Method>().is_err());
    }
}
