use std::io::{Read, Write};

use rayon::prelude::*;

use super::autocorr::{autocorrelations, partial_autocorrelations};
use super::spectral::{glk_from, intper_from, log_periodogram, normalized_periodogram, per_from};
use super::{Measure, MeasureKind};
use crate::ingest::SeriesMatrix;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"TSDM";
const VERSION: u8 = 1;

/// Symmetric pairwise dissimilarities under one measure, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    measure: Measure,
    labels: Vec<String>,
    data: Vec<f64>,
}

impl DistanceMatrix {
    /// Wrap a precomputed row-major matrix after checking it is square,
    /// finite and symmetric (and, for metric measures, non-negative with a
    /// zero diagonal).
    pub fn from_raw(measure: Measure, labels: Vec<String>, data: Vec<f64>) -> Result<Self> {
        let n = labels.len();
        if data.len() != n * n {
            return Err(Error::Shape(format!("{} values do not form a {n}x{n} matrix", data.len())));
        }
        if n < 2 {
            return Err(Error::Shape("a distance matrix needs at least two entities".into()));
        }
        let nonmetric = measure.kind.is_nonmetric();
        for i in 0..n {
            for j in 0..n {
                let v = data[i * n + j];
                if !v.is_finite() {
                    return Err(Error::Input(format!("non-finite distance at ({i}, {j})")));
                }
                let w = data[j * n + i];
                if (v - w).abs() > 1e-9 * v.abs().max(w.abs()).max(1.0) {
                    return Err(Error::Input(format!("matrix is not symmetric at ({i}, {j})")));
                }
                if !nonmetric && (v < 0.0 || (i == j && v != 0.0)) {
                    return Err(Error::Input(format!(
                        "{} matrix must be non-negative with zero diagonal (entry ({i}, {j}) = {v})",
                        measure.kind
                    )));
                }
            }
        }
        Ok(Self { measure, labels, data })
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn measure(&self) -> &Measure {
        &self.measure
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn nonmetric(&self) -> bool {
        self.measure.kind.is_nonmetric()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.n();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// A copy with zero diagonal and all off-diagonal entries shifted so the
    /// smallest is non-negative. Identity for metric measures. Used where an
    /// algorithm needs ratios or squares of dissimilarities.
    pub fn nonnegative(&self) -> DistanceMatrix {
        let n = self.n();
        let min_off = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| self.get(i, j))
            .fold(f64::INFINITY, f64::min);
        let shift = if min_off < 0.0 { -min_off } else { 0.0 };
        let mut data = self.data.clone();
        for i in 0..n {
            for j in 0..n {
                data[i * n + j] = if i == j { 0.0 } else { self.get(i, j) + shift };
            }
        }
        DistanceMatrix { measure: self.measure, labels: self.labels.clone(), data }
    }

    /// Same matrix with rows and columns reordered so that new index `k`
    /// holds old index `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> DistanceMatrix {
        let n = self.n();
        assert_eq!(perm.len(), n);
        let labels = perm.iter().map(|&p| self.labels[p].clone()).collect();
        let mut data = vec![0.0; n * n];
        for a in 0..n {
            for b in 0..n {
                data[a * n + b] = self.get(perm[a], perm[b]);
            }
        }
        DistanceMatrix { measure: self.measure, labels, data }
    }

    /// CSV with the labels as header and a square numeric body.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.labels)?;
        for i in 0..self.n() {
            w.write_record(self.row(i).iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R, measure: Measure) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let labels: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
        let mut data = Vec::with_capacity(labels.len() * labels.len());
        for rec in r.records() {
            for v in rec?.iter() {
                data.push(v.parse::<f64>().map_err(|_| Error::Format(format!("bad distance `{v}`")))?);
            }
        }
        Self::from_raw(measure, labels, data)
    }

    /// Binary layout: `"TSDM"`, version byte, `n` as u32, `n` labels each as
    /// a u32 byte length plus UTF-8 bytes, then `n * n` f64 values row-major.
    /// All integers and floats little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(9 + self.data.len() * 8);
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&(self.n() as u32).to_le_bytes());
        for l in &self.labels {
            out.extend_from_slice(&(l.len() as u32).to_le_bytes());
            out.extend_from_slice(l.as_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], measure: Measure) -> Result<Self> {
        let mut cur = bytes;
        let mut take = |k: usize| -> Result<&[u8]> {
            if cur.len() < k {
                return Err(Error::Format("truncated TSDM payload".into()));
            }
            let (head, tail) = cur.split_at(k);
            cur = tail;
            Ok(head)
        };
        if take(4)? != MAGIC {
            return Err(Error::Format("missing TSDM magic".into()));
        }
        let version = take(1)?[0];
        if version != VERSION {
            return Err(Error::Format(format!("unsupported TSDM version {version}")));
        }
        let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().unwrap()) as usize;
        let n = u32_at(take(4)?);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let len = u32_at(take(4)?);
            let raw = take(len)?;
            labels.push(
                String::from_utf8(raw.to_vec()).map_err(|_| Error::Format("label is not UTF-8".into()))?,
            );
        }
        let mut data = Vec::with_capacity(n * n);
        for _ in 0..n * n {
            data.push(f64::from_le_bytes(take(8)?.try_into().unwrap()));
        }
        if !cur.is_empty() {
            return Err(Error::Format("trailing bytes after TSDM payload".into()));
        }
        Self::from_raw(measure, labels, data)
    }
}

enum Prepared {
    Raw,
    Feature(Vec<Vec<f64>>),
}

fn annotate(e: Error, context: &str) -> Error {
    match e {
        Error::Degenerate(m) => Error::Degenerate(format!("{context}: {m}")),
        Error::Shape(m) => Error::Shape(format!("{context}: {m}")),
        Error::Config(m) => Error::Config(format!("{context}: {m}")),
        Error::Constraint(m) => Error::Constraint(format!("{context}: {m}")),
        other => other,
    }
}

/// Per-series features for the measures that reduce to a distance between
/// feature vectors; avoids recomputing spectra for every pair.
fn prepare(sm: &SeriesMatrix, m: &Measure) -> Result<Prepared> {
    let lag = m.lag_for(sm.t());
    let f: fn(&[f64], usize) -> Result<Vec<f64>> = match m.kind {
        MeasureKind::Acf => autocorrelations,
        MeasureKind::Pacf => partial_autocorrelations,
        MeasureKind::Per | MeasureKind::IntPer => |x, _| normalized_periodogram(x),
        MeasureKind::SpecGlk => |x, _| log_periodogram(x),
        _ => return Ok(Prepared::Raw),
    };
    let labels = sm.labels();
    let feats = (0..sm.n())
        .into_par_iter()
        .map(|i| {
            f(sm.row(i), lag).map_err(|e| {
                let partner = if i == 0 { 1 } else { 0 };
                annotate(e, &format!("`{}` vs `{}`", labels[i], labels[partner]))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Prepared::Feature(feats))
}

/// Full pairwise matrix for `m`. The upper triangle is computed (in
/// parallel) and mirrored; the result does not depend on evaluation order.
pub fn distance_matrix(sm: &SeriesMatrix, m: &Measure) -> Result<DistanceMatrix> {
    m.validate()?;
    let n = sm.n();
    if n < 2 {
        return Err(Error::Shape("a distance matrix needs at least two series".into()));
    }
    let labels = sm.labels();
    let prepared = prepare(sm, m)?;
    let pair = |i: usize, j: usize| -> Result<f64> {
        match &prepared {
            Prepared::Raw => m
                .distance(sm.row(i), sm.row(j))
                .map_err(|e| annotate(e, &format!("`{}` vs `{}`", labels[i], labels[j]))),
            Prepared::Feature(f) => Ok(match m.kind {
                MeasureKind::Acf | MeasureKind::Pacf | MeasureKind::Per => per_from(&f[i], &f[j]),
                MeasureKind::IntPer => intper_from(&f[i], &f[j]),
                MeasureKind::SpecGlk => glk_from(&f[i], &f[j], m.params.bandwidth),
                _ => unreachable!("raw measures are not prepared"),
            }),
        }
    };
    let include_diag = m.kind.is_nonmetric();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i..n).filter(move |&j| j > i || include_diag).map(move |j| (i, j)))
        .collect();
    let values = pairs
        .par_iter()
        .map(|&(i, j)| pair(i, j))
        .collect::<Result<Vec<f64>>>()?;
    let mut data = vec![0.0; n * n];
    for (&(i, j), v) in pairs.iter().zip(values) {
        data[i * n + j] = v;
        data[j * n + i] = v;
    }
    Ok(DistanceMatrix { measure: *m, labels, data })
}
