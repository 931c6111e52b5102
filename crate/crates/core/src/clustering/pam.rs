use super::{canonicalize, check_k, ClusteringConfig, ClusteringResult, Method};
use crate::distances::DistanceMatrix;
use crate::Result;

fn nearest(d: &DistanceMatrix, medoids: &[usize], i: usize) -> usize {
    // A medoid always represents itself, even if another medoid is at
    // distance zero.
    if let Some(c) = medoids.iter().position(|&m| m == i) {
        return c;
    }
    let mut best = 0;
    for c in 1..medoids.len() {
        if d.get(i, medoids[c]) < d.get(i, medoids[best]) {
            best = c;
        }
    }
    best
}

fn total_cost(d: &DistanceMatrix, medoids: &[usize]) -> f64 {
    (0..d.n()).map(|i| d.get(i, medoids[nearest(d, medoids, i)])).sum()
}

fn build(d: &DistanceMatrix, k: usize) -> Vec<usize> {
    let n = d.n();
    let first = (0..n)
        .map(|i| (i, d.row(i).iter().sum::<f64>()))
        .fold((0, f64::INFINITY), |b, (i, s)| if s < b.1 { (i, s) } else { b })
        .0;
    let mut medoids = vec![first];
    let mut near: Vec<f64> = (0..n).map(|i| d.get(i, first)).collect();
    while medoids.len() < k {
        let mut best = (usize::MAX, f64::NEG_INFINITY);
        for c in (0..n).filter(|c| !medoids.contains(c)) {
            let gain: f64 = (0..n).map(|i| (near[i] - d.get(i, c)).max(0.0)).sum();
            if gain > best.1 {
                best = (c, gain);
            }
        }
        medoids.push(best.0);
        for (i, v) in near.iter_mut().enumerate() {
            *v = v.min(d.get(i, best.0));
        }
    }
    medoids
}

/// k-medoids: greedy BUILD initialization followed by best-improvement
/// SWAP passes until no swap lowers the total distance to the nearest
/// medoid, or `max_iter` passes have run.
///
/// BUILD and SWAP are deterministic, so `seed` has no effect; it is
/// accepted so every method shares one call shape.
pub fn pam_cluster(d: &DistanceMatrix, k: usize, seed: u64, max_iter: usize) -> Result<ClusteringResult> {
    check_k(d, k)?;
    let n = d.n();
    let mut medoids = build(d, k);
    let mut cost = total_cost(d, &medoids);
    let mut trace = vec![cost];
    let mut warnings = Vec::new();

    for _ in 0..max_iter {
        let mut best = (usize::MAX, usize::MAX, cost);
        for slot in 0..k {
            for cand in (0..n).filter(|c| !medoids.contains(c)) {
                let mut trial = medoids.clone();
                trial[slot] = cand;
                let c = total_cost(d, &trial);
                if c < best.2 - 1e-12 * cost.abs().max(1.0) {
                    best = (slot, cand, c);
                }
            }
        }
        if best.0 == usize::MAX {
            break;
        }
        medoids[best.0] = best.1;
        cost = best.2;
        trace.push(cost);
    }

    let mut assignment: Vec<usize> = (0..n).map(|i| nearest(d, &medoids, i)).collect();
    // Empty-cluster repair: promote the point farthest from its medoid.
    loop {
        let mut counts = vec![0usize; k];
        for &a in &assignment {
            counts[a] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else { break };
        let far = (0..n)
            .filter(|i| !medoids.contains(i))
            .max_by(|&a, &b| {
                d.get(a, medoids[assignment[a]])
                    .total_cmp(&d.get(b, medoids[assignment[b]]))
                    .then(b.cmp(&a))
            })
            .expect("k <= n leaves a non-medoid when a cluster is empty");
        warnings.push(format!("cluster {empty} was empty; promoted entity {far} to medoid"));
        medoids[empty] = far;
        assignment = (0..n).map(|i| nearest(d, &medoids, i)).collect();
        cost = total_cost(d, &medoids);
    }

    let map = canonicalize(&mut assignment, k);
    let mut ordered = vec![0; k];
    for (old, &new) in map.iter().enumerate() {
        ordered[new] = medoids[old];
    }
    Ok(ClusteringResult {
        config: ClusteringConfig { seed, max_iter, ..ClusteringConfig::new(Method::Partitional, k) },
        labels: d.labels().to_vec(),
        assignment,
        membership: None,
        medoids: Some(ordered),
        dendrogram: None,
        cost: Some(cost),
        trace,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::super::testutil::points;
    use super::*;
    use rand::Rng;

    /// Exhaustive minimum over all medoid pairs.
    fn brute_force_k2(d: &DistanceMatrix) -> f64 {
        let n = d.n();
        let mut best = f64::INFINITY;
        for a in 0..n {
            for b in a + 1..n {
                let c: f64 = (0..n).map(|i| d.get(i, a).min(d.get(i, b))).sum();
                best = best.min(c);
            }
        }
        best
    }

    #[test]
    fn k_equals_n_is_zero_cost() {
        let d = points(&[0.0, 1.0, 5.0, 6.0]);
        let r = pam_cluster(&d, 4, 42, 100).unwrap();
        assert_eq!(r.cost, Some(0.0));
        assert_eq!(r.assignment, vec![0, 1, 2, 3]);
    }

    #[test]
    fn two_blobs_match_exhaustive_search() {
        let mut rng = crate::rng::seeded(21);
        for _ in 0..10 {
            let xs: Vec<f64> = (0..10)
                .map(|i| if i < 5 { rng.random_range(0.0..1.0) } else { rng.random_range(10.0..11.0) })
                .collect();
            let d = points(&xs);
            let r = pam_cluster(&d, 2, 42, 100).unwrap();
            assert!((r.cost.unwrap() - brute_force_k2(&d)).abs() < 1e-12);
            assert_eq!(r.assignment, vec![0, 0, 0, 0, 0, 1, 1, 1, 1, 1]);
        }
    }

    #[test]
    fn swap_never_increases_cost_and_is_repeatable() {
        let mut rng = crate::rng::seeded(5);
        let xs: Vec<f64> = (0..30).map(|_| rng.random_range(0.0..100.0)).collect();
        let d = points(&xs);
        let r = pam_cluster(&d, 4, 42, 100).unwrap();
        assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(r, pam_cluster(&d, 4, 42, 100).unwrap());
        let meds = r.medoids.unwrap();
        for (i, &c) in r.assignment.iter().enumerate() {
            assert_eq!(r.assignment[meds[c]], c);
            for &m in &meds {
                assert!(d.get(i, meds[c]) <= d.get(i, m));
            }
        }
    }

    #[test]
    fn duplicate_points_keep_every_cluster() {
        let d = points(&[0.0, 0.0, 0.0, 0.0, 5.0]);
        let r = pam_cluster(&d, 3, 42, 100).unwrap();
        let mut counts = [0; 3];
        for &a in &r.assignment {
            counts[a] += 1;
        }
        assert!(counts.iter().all(|&c| c > 0), "{counts:?}");
    }
}
