use rand::Rng;

use super::{canonicalize, check_k, ClusteringConfig, ClusteringResult, Method};
use crate::distances::DistanceMatrix;
use crate::{Error, Result};

/// Membership of point `i` in each medoid's cluster.
pub(crate) fn memberships(d: &DistanceMatrix, medoids: &[usize], m: f64, i: usize) -> Vec<f64> {
    let k = medoids.len();
    let mut u = vec![0.0; k];
    if let Some(own) = medoids.iter().position(|&q| q == i) {
        u[own] = 1.0;
        return u;
    }
    if let Some(zero) = medoids.iter().position(|&q| d.get(i, q) <= 0.0) {
        u[zero] = 1.0;
        return u;
    }
    let p = 2.0 / (m - 1.0);
    for c in 0..k {
        let dic = d.get(i, medoids[c]);
        let s: f64 = medoids.iter().map(|&q| (dic / d.get(i, q)).powf(p)).sum();
        u[c] = 1.0 / s;
    }
    let total: f64 = u.iter().sum();
    u.iter_mut().for_each(|v| *v /= total);
    u
}

fn objective(d: &DistanceMatrix, medoids: &[usize], u: &[Vec<f64>], m: f64) -> f64 {
    u.iter()
        .enumerate()
        .map(|(i, row)| row.iter().zip(medoids).map(|(v, &q)| v.powf(m) * d.get(i, q)).sum::<f64>())
        .sum()
}

/// Seeded first medoid, then farthest-first traversal.
fn init_medoids(d: &DistanceMatrix, k: usize, seed: u64) -> Vec<usize> {
    let n = d.n();
    let mut rng = crate::rng::seeded(seed);
    let mut medoids = vec![rng.random_range(0..n)];
    while medoids.len() < k {
        let next = (0..n)
            .filter(|i| !medoids.contains(i))
            .map(|i| (i, medoids.iter().map(|&q| d.get(i, q)).fold(f64::INFINITY, f64::min)))
            .fold((usize::MAX, f64::NEG_INFINITY), |b, (i, v)| if v > b.1 { (i, v) } else { b })
            .0;
        medoids.push(next);
    }
    medoids
}

/// Fuzzy c-medoids on a dissimilarity matrix.
///
/// Memberships follow `u_ik = 1 / sum_j (d(i, q_k) / d(i, q_j))^(2 / (m - 1))`
/// over the current medoids `q`; a point at distance zero from a medoid
/// (including the medoid itself) belongs to it fully. Each medoid then
/// moves to the point minimizing `sum_i u_ik^m d(i, .)`. Iteration stops
/// once the medoid set is stable, the objective changes by less than
/// `tol`, or after `max_iter` rounds. Non-metric matrices are shifted to be
/// non-negative first.
pub fn fuzzy_cmedoids(
    d: &DistanceMatrix,
    k: usize,
    m: f64,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<ClusteringResult> {
    if !(m > 1.0) {
        return Err(Error::Config(format!("fuzzifier m must exceed 1, got {m}")));
    }
    check_k(d, k)?;
    let shifted;
    let d = if d.nonmetric() {
        shifted = d.nonnegative();
        &shifted
    } else {
        d
    };
    let n = d.n();
    let mut medoids = init_medoids(d, k, seed);
    let mut u: Vec<Vec<f64>> = (0..n).map(|i| memberships(d, &medoids, m, i)).collect();
    let mut trace = vec![objective(d, &medoids, &u, m)];

    for _ in 0..max_iter {
        let mut next = Vec::with_capacity(k);
        for c in 0..k {
            let w: Vec<f64> = u.iter().map(|row| row[c].powf(m)).collect();
            let best = (0..n)
                .filter(|j| !next.contains(j))
                .map(|j| (j, (0..n).map(|i| w[i] * d.get(i, j)).sum::<f64>()))
                .fold((usize::MAX, f64::INFINITY), |b, (j, v)| if v < b.1 { (j, v) } else { b })
                .0;
            next.push(best);
        }
        let stable = next == medoids;
        medoids = next;
        u = (0..n).map(|i| memberships(d, &medoids, m, i)).collect();
        let obj = objective(d, &medoids, &u, m);
        let delta = (trace.last().unwrap() - obj).abs();
        trace.push(obj);
        if stable || delta < tol {
            break;
        }
    }

    let mut assignment: Vec<usize> = u
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |b, (c, &v)| if v > b.1 { (c, v) } else { b })
                .0
        })
        .collect();
    let map = canonicalize(&mut assignment, k);
    let mut ordered_meds = vec![0; k];
    let mut ordered_u = vec![vec![0.0; k]; n];
    for (old, &new) in map.iter().enumerate() {
        ordered_meds[new] = medoids[old];
        for i in 0..n {
            ordered_u[i][new] = u[i][old];
        }
    }
    Ok(ClusteringResult {
        config: ClusteringConfig { fuzzifier: m, seed, max_iter, tol, ..ClusteringConfig::new(Method::Fuzzy, k) },
        labels: d.labels().to_vec(),
        assignment,
        membership: Some(ordered_u),
        medoids: Some(ordered_meds),
        dendrogram: None,
        cost: trace.last().copied(),
        trace,
        warnings: Vec::new(),
    })
}
