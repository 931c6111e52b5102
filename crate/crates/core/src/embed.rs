//! Exact t-SNE on a precomputed distance matrix.

use std::io::Write;

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distances::DistanceMatrix;
use crate::{Error, Result};

const EXAGGERATION: f64 = 12.0;
const EXAGGERATION_ITERS: usize = 250;
const PERPLEXITY_TOL: f64 = 1e-5;
const PERPLEXITY_STEPS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TsneParams {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TsneParams {
    fn default() -> Self {
        Self { perplexity: 15.0, iterations: 1000, learning_rate: 200.0, seed: 42 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub labels: Vec<String>,
    pub points: Vec<[f64; 2]>,
    /// KL(P || Q) after every iteration, without exaggeration.
    pub kl_trace: Vec<f64>,
    pub params: TsneParams,
}

impl Embedding {
    /// `entity,x,y,cluster`.
    pub fn write_csv<W: Write>(&self, assignment: &[usize], out: W) -> Result<()> {
        if assignment.len() != self.labels.len() {
            return Err(Error::Shape("assignment length differs from embedding size".into()));
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["entity", "x", "y", "cluster"])?;
        for ((l, p), c) in self.labels.iter().zip(&self.points).zip(assignment) {
            w.write_record([l.clone(), p[0].to_string(), p[1].to_string(), c.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn squared_scaled(d: &DistanceMatrix) -> Vec<f64> {
    let n = d.n();
    let sq: Vec<f64> = d.as_slice().iter().map(|v| v * v).collect();
    let mean_off = sq.iter().sum::<f64>() / (n * (n - 1)) as f64;
    let scale = if mean_off > 0.0 { mean_off } else { 1.0 };
    sq.into_iter().map(|v| v / scale).collect()
}

/// Row-conditional affinities `p(j | i)`, each row calibrated by bisection
/// on the Gaussian precision so its entropy matches `ln(perplexity)`.
pub fn conditional_probabilities(d: &DistanceMatrix, perplexity: f64) -> Result<Vec<f64>> {
    let n = d.n();
    check_perplexity(n, perplexity)?;
    let d = d.nonnegative();
    let sq = squared_scaled(&d);
    let target = perplexity.ln();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let dist = &sq[i * n..(i + 1) * n];
            let mut beta = 1.0;
            let (mut lo, mut hi) = (0.0, f64::INFINITY);
            let mut row = vec![0.0; n];
            for _ in 0..PERPLEXITY_STEPS {
                let h = entropy_row(dist, i, beta, &mut row);
                let diff = h - target;
                if diff.abs() < PERPLEXITY_TOL {
                    break;
                }
                if diff > 0.0 {
                    lo = beta;
                    beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
                } else {
                    hi = beta;
                    beta = (beta + lo) / 2.0;
                }
            }
            entropy_row(dist, i, beta, &mut row);
            row
        })
        .collect();
    Ok(rows.concat())
}

/// Fill `row` with normalized affinities for precision `beta`; returns the
/// Shannon entropy in nats.
fn entropy_row(dist: &[f64], i: usize, beta: f64, row: &mut [f64]) -> f64 {
    let min = dist
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, v)| *v)
        .fold(f64::INFINITY, f64::min);
    let mut sum = 0.0;
    for (j, (r, &v)) in row.iter_mut().zip(dist).enumerate() {
        *r = if j == i { 0.0 } else { (-beta * (v - min)).exp() };
        sum += *r;
    }
    let mut h = 0.0;
    for r in row.iter_mut() {
        *r /= sum;
        if *r > 0.0 {
            h -= *r * r.ln();
        }
    }
    h
}

fn check_perplexity(n: usize, perplexity: f64) -> Result<()> {
    let upper = (n as f64 - 1.0) / 3.0;
    if !(perplexity > 1.0 && perplexity < upper) {
        return Err(Error::Config(format!(
            "perplexity {perplexity} is infeasible for {n} points (need 1 < perplexity < {upper:.3})"
        )));
    }
    Ok(())
}

/// Symmetric joint affinities `(p(j|i) + p(i|j)) / 2n`.
pub fn joint_probabilities(d: &DistanceMatrix, perplexity: f64) -> Result<Vec<f64>> {
    let n = d.n();
    let cond = conditional_probabilities(d, perplexity)?;
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                p[i * n + j] = ((cond[i * n + j] + cond[j * n + i]) / (2.0 * n as f64)).max(1e-12);
            }
        }
    }
    Ok(p)
}

fn student_kernel(y: &[[f64; 2]]) -> (Vec<f64>, f64) {
    let n = y.len();
    let mut num = vec![0.0; n * n];
    let mut z = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let dx = y[i][0] - y[j][0];
            let dy = y[i][1] - y[j][1];
            let v = 1.0 / (1.0 + dx * dx + dy * dy);
            num[i * n + j] = v;
            num[j * n + i] = v;
            z += 2.0 * v;
        }
    }
    (num, z)
}

/// KL(P || Q) for low-dimensional points `y`.
pub fn kl_divergence(p: &[f64], y: &[[f64; 2]]) -> f64 {
    let n = y.len();
    let (num, z) = student_kernel(y);
    let mut kl = 0.0;
    for i in 0..n {
        for j in 0..n {
            let pij = p[i * n + j];
            if i != j && pij > 0.0 {
                let q = (num[i * n + j] / z).max(1e-300);
                kl += pij * (pij / q).ln();
            }
        }
    }
    kl
}

/// Analytic gradient of KL with respect to `y`, with `P` scaled by
/// `exaggeration`.
pub fn kl_gradient(p: &[f64], y: &[[f64; 2]], exaggeration: f64) -> Vec<[f64; 2]> {
    let n = y.len();
    let (num, z) = student_kernel(y);
    (0..n)
        .map(|i| {
            let mut g = [0.0; 2];
            for j in (0..n).filter(|&j| j != i) {
                let w = num[i * n + j];
                let coef = 4.0 * (exaggeration * p[i * n + j] - w / z) * w;
                g[0] += coef * (y[i][0] - y[j][0]);
                g[1] += coef * (y[i][1] - y[j][1]);
            }
            g
        })
        .collect()
}

/// 2-D t-SNE layout of the entities in `d`.
///
/// Entities are processed in label order internally, so permuting the
/// input permutes the output points identically.
pub fn tsne_embed(d: &DistanceMatrix, params: TsneParams) -> Result<Embedding> {
    let n = d.n();
    check_perplexity(n, params.perplexity)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d.labels()[a].cmp(&d.labels()[b]).then(a.cmp(&b)));
    let sorted = d.permuted(&order);
    let p = joint_probabilities(&sorted, params.perplexity)?;

    let mut rng = crate::rng::seeded(params.seed);
    let normal = Normal::new(0.0, 1e-4).expect("valid normal");
    let mut y: Vec<[f64; 2]> = (0..n).map(|_| [normal.sample(&mut rng), normal.sample(&mut rng)]).collect();
    let mut velocity = vec![[0.0f64; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    let mut kl_trace = Vec::with_capacity(params.iterations);
    let mut step_scale = 1.0f64;

    for it in 0..params.iterations {
        let (exaggeration, momentum) = if it < EXAGGERATION_ITERS { (EXAGGERATION, 0.5) } else { (1.0, 0.8) };
        let grad = kl_gradient(&p, &y, exaggeration);
        let restart_from = (it >= EXAGGERATION_ITERS).then(|| y.clone());
        for i in 0..n {
            for a in 0..2 {
                let same_sign = (grad[i][a] > 0.0) == (velocity[i][a] > 0.0);
                gains[i][a] = if same_sign { (gains[i][a] * 0.8).max(0.01) } else { gains[i][a] + 0.2 };
                velocity[i][a] =
                    momentum * velocity[i][a] - step_scale * params.learning_rate * gains[i][a] * grad[i][a];
                y[i][a] += velocity[i][a];
            }
        }
        for a in 0..2 {
            let mean = y.iter().map(|pt| pt[a]).sum::<f64>() / n as f64;
            y.iter_mut().for_each(|pt| pt[a] -= mean);
        }
        let kl = kl_divergence(&p, &y);
        // Once exaggeration is off, a step that raises KL is undone, the
        // momentum and gains are reset and the step is halved.
        if let (Some(prev), Some(&last)) = (restart_from, kl_trace.last()) {
            if kl > last {
                y = prev;
                velocity.iter_mut().for_each(|v| *v = [0.0; 2]);
                gains.iter_mut().for_each(|g| *g = [1.0; 2]);
                step_scale *= 0.5;
                kl_trace.push(last);
                continue;
            }
            step_scale = (step_scale * 1.1).min(1.0);
        }
        kl_trace.push(kl);
    }

    let mut points = vec![[0.0; 2]; n];
    for (k, &orig) in order.iter().enumerate() {
        points[orig] = y[k];
    }
    if points.iter().any(|pt| !pt[0].is_finite() || !pt[1].is_finite()) {
        return Err(Error::Degenerate("t-SNE diverged to non-finite coordinates".into()));
    }
    Ok(Embedding { labels: d.labels().to_vec(), points, kl_trace, params })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distances::{Measure, MeasureKind};
    use rand::Rng;

    fn from_points(pts: &[Vec<f64>]) -> DistanceMatrix {
        let labels = (0..pts.len()).map(|i| format!("e{i:02}")).collect();
        let data = pts
            .iter()
            .flat_map(|a| pts.iter().map(move |b| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()))
            .collect();
        DistanceMatrix::from_raw(Measure::new(MeasureKind::Eucl), labels, data).unwrap()
    }

    fn three_groups() -> DistanceMatrix {
        let centers = [[0.0, 0.0, 0.0], [5.0, 0.0, 1.0], [0.0, 7.0, 2.0]];
        let pts: Vec<Vec<f64>> = (0..30).map(|i| centers[i % 3].to_vec()).collect();
        from_points(&pts)
    }

    #[test]
    fn infeasible_perplexity_is_rejected() {
        let d = from_points(&(0..10).map(|i| vec![i as f64]).collect::<Vec<_>>());
        assert!(matches!(tsne_embed(&d, TsneParams { perplexity: 3.0, ..Default::default() }), Err(Error::Config(_))));
        assert!(matches!(conditional_probabilities(&d, 1.0), Err(Error::Config(_))));
    }

    #[test]
    fn conditional_rows_sum_to_one_and_hit_perplexity() {
        let mut rng = crate::rng::seeded(1);
        let pts: Vec<Vec<f64>> = (0..40).map(|_| (0..4).map(|_| rng.random_range(0.0..100.0)).collect()).collect();
        let d = from_points(&pts);
        let p = conditional_probabilities(&d, 10.0).unwrap();
        for i in 0..40 {
            let row = &p[i * 40..(i + 1) * 40];
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let h: f64 = row.iter().filter(|v| **v > 0.0).map(|v| -v * v.ln()).sum();
            assert!((h.exp() - 10.0).abs() < 1e-3);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = crate::rng::seeded(4);
        let pts: Vec<Vec<f64>> = (0..5).map(|_| (0..3).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
        let d = from_points(&pts);
        // Five points only admit perplexity < 4/3, so build P directly.
        let cond = {
            let mut c = vec![0.0; 25];
            for i in 0..5 {
                let row: Vec<f64> = (0..5).map(|j| if i == j { 0.0 } else { (-d.get(i, j).powi(2)).exp() }).collect();
                let s: f64 = row.iter().sum();
                for j in 0..5 {
                    c[i * 5 + j] = row[j] / s;
                }
            }
            c
        };
        let p: Vec<f64> = (0..25).map(|k| if k / 5 == k % 5 { 0.0 } else { (cond[k] + cond[(k % 5) * 5 + k / 5]) / 10.0 }).collect();
        let y: Vec<[f64; 2]> = (0..5).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
        let g = kl_gradient(&p, &y, 1.0);
        let h = 1e-6;
        for i in 0..5 {
            for a in 0..2 {
                let mut plus = y.clone();
                plus[i][a] += h;
                let mut minus = y.clone();
                minus[i][a] -= h;
                let fd = (kl_divergence(&p, &plus) - kl_divergence(&p, &minus)) / (2.0 * h);
                assert!((fd - g[i][a]).abs() <= 1e-4 * g[i][a].abs().max(1e-3), "{fd} vs {}", g[i][a]);
            }
        }
    }

    #[test]
    fn zero_distance_groups_stay_together() {
        let d = three_groups();
        let e = tsne_embed(&d, TsneParams { perplexity: 5.0, ..Default::default() }).unwrap();
        let dist = |a: usize, b: usize| {
            let (p, q) = (e.points[a], e.points[b]);
            ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
        };
        let max_within = (0..30)
            .flat_map(|i| (0..30).filter(move |&j| j != i && i % 3 == j % 3).map(move |j| (i, j)))
            .map(|(i, j)| dist(i, j))
            .fold(0.0, f64::max);
        let min_between = (0..30)
            .flat_map(|i| (0..30).filter(move |&j| i % 3 != j % 3).map(move |j| (i, j)))
            .map(|(i, j)| dist(i, j))
            .fold(f64::INFINITY, f64::min);
        assert!(max_within < min_between, "{max_within} vs {min_between}");
        assert!(e.kl_trace[999] < e.kl_trace[299]);
    }

    #[test]
    fn permuting_input_permutes_output() {
        let mut rng = crate::rng::seeded(8);
        let pts: Vec<Vec<f64>> = (0..20).map(|_| (0..3).map(|_| rng.random_range(0.0..10.0)).collect()).collect();
        let d = from_points(&pts);
        let params = TsneParams { perplexity: 4.0, iterations: 300, ..Default::default() };
        let e = tsne_embed(&d, params).unwrap();
        let perm: Vec<usize> = (0..20).rev().collect();
        let ep = tsne_embed(&d.permuted(&perm), params).unwrap();
        for (k, &orig) in perm.iter().enumerate() {
            assert_eq!(ep.points[k], e.points[orig]);
        }
    }
}
