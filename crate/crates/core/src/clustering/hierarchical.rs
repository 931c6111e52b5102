use super::{canonicalize, check_k, ClusteringConfig, ClusteringResult, Linkage, Merge, Method};
use crate::distances::DistanceMatrix;
use crate::Result;

/// Agglomerative clustering with Lance-Williams updates, cut to `k` clusters.
///
/// The full merge sequence is kept in the dendrogram. At each step the
/// closest pair of active clusters merges; ties go to the smallest slot
/// pair `(i, j)`, where slot `i` is the lowest entity index that ever
/// belonged to the cluster.
pub fn hier_cluster(d: &DistanceMatrix, k: usize, linkage: Linkage) -> Result<ClusteringResult> {
    check_k(d, k)?;
    let n = d.n();
    let mut warnings = Vec::new();
    if d.nonmetric() && linkage == Linkage::Single {
        warnings.push(format!("single linkage on non-metric {} dissimilarities", d.measure().kind));
    }
    let mut dist = d.as_slice().to_vec();
    let mut active = vec![true; n];
    let mut size = vec![1usize; n];
    let mut id: Vec<usize> = (0..n).collect();
    let mut owner: Vec<usize> = (0..n).collect();
    let mut cut: Option<Vec<usize>> = if k == n { Some(owner.clone()) } else { None };
    let mut merges = Vec::with_capacity(n - 1);

    for step in 0..n - 1 {
        let mut best = (usize::MAX, usize::MAX, f64::INFINITY);
        for i in (0..n).filter(|&i| active[i]) {
            for j in (i + 1..n).filter(|&j| active[j]) {
                let v = dist[i * n + j];
                if v < best.2 || best.0 == usize::MAX {
                    best = (i, j, v);
                }
            }
        }
        let (i, j, h) = best;
        let (ni, nj) = (size[i] as f64, size[j] as f64);
        for m in (0..n).filter(|&m| active[m] && m != i && m != j) {
            let (dim, djm) = (dist[i * n + m], dist[j * n + m]);
            let v = match linkage {
                Linkage::Single => dim.min(djm),
                Linkage::Complete => dim.max(djm),
                Linkage::Average => (ni * dim + nj * djm) / (ni + nj),
            };
            dist[i * n + m] = v;
            dist[m * n + i] = v;
        }
        merges.push(Merge { left: id[i].min(id[j]), right: id[i].max(id[j]), height: h, size: size[i] + size[j] });
        active[j] = false;
        size[i] += size[j];
        id[i] = n + step;
        for o in owner.iter_mut().filter(|o| **o == j) {
            *o = i;
        }
        if n - 1 - step == k {
            cut = Some(owner.clone());
        }
    }

    let mut assignment = cut.expect("cut reached for k in [2, n]");
    canonicalize(&mut assignment, n);
    Ok(ClusteringResult {
        config: ClusteringConfig { linkage, ..ClusteringConfig::new(Method::Hierarchical, k) },
        labels: d.labels().to_vec(),
        assignment,
        membership: None,
        medoids: None,
        dendrogram: Some(merges),
        cost: None,
        trace: Vec::new(),
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::super::testutil::{co_membership, points};
    use super::*;
    use crate::distances::{Measure, MeasureKind};
    use proptest::prelude::*;

    #[test]
    fn separated_groups_recovered() {
        let d = points(&[0.0, 0.0, 0.0, 10.0, 10.0, 10.0]);
        for l in [Linkage::Average, Linkage::Complete, Linkage::Single] {
            let r = hier_cluster(&d, 2, l).unwrap();
            assert_eq!(r.assignment, vec![0, 0, 0, 1, 1, 1]);
        }
    }

    #[test]
    fn k_n_minus_one_merges_closest_pair() {
        let d = points(&[0.0, 4.0, 9.0, 9.5, 20.0]);
        let r = hier_cluster(&d, 4, Linkage::Average).unwrap();
        assert_eq!(r.assignment, vec![0, 1, 2, 2, 3]);
    }

    #[test]
    fn average_linkage_hand_trace() {
        // Points 0, 1, 3, 7, 8.5, 15 on a line. Worked by hand:
        //   merge {0,1} at 1; {3,4} at 1.5; {2} + {0,1} at (3+2)/2 = 2.5;
        //   {0,1,2} + {3,4} at 38.5/6; everything + {5} at 55.5/5.
        let d = points(&[0.0, 1.0, 3.0, 7.0, 8.5, 15.0]);
        let r = hier_cluster(&d, 2, Linkage::Average).unwrap();
        let m = r.dendrogram.unwrap();
        let expect = [(0, 1, 1.0), (3, 4, 1.5), (2, 6, 2.5), (7, 8, 38.5 / 6.0), (5, 9, 11.1)];
        assert_eq!(m.len(), 5);
        for (got, (l, rr, h)) in m.iter().zip(expect) {
            assert_eq!((got.left, got.right), (l, rr));
            assert!((got.height - h).abs() < 1e-12, "{} vs {h}", got.height);
        }
        assert_eq!(m[4].size, 6);
        assert_eq!(r.assignment, vec![0, 0, 0, 0, 0, 1]);
    }

    #[test]
    fn ties_go_to_lowest_pair() {
        let d = points(&[0.0, 1.0, 2.0, 3.0]);
        let r = hier_cluster(&d, 3, Linkage::Single).unwrap();
        assert_eq!(r.assignment, vec![0, 0, 1, 2]);
    }

    #[test]
    fn single_linkage_on_soft_dtw_warns() {
        let labels = vec!["a".to_owned(), "b".to_owned(), "c".to_owned()];
        let data = vec![-1.0, 2.0, 5.0, 2.0, -1.0, 4.0, 5.0, 4.0, -1.0];
        let d = DistanceMatrix::from_raw(Measure::new(MeasureKind::Sdtw), labels, data).unwrap();
        let r = hier_cluster(&d, 2, Linkage::Single).unwrap();
        assert_eq!(r.warnings.len(), 1);
        assert_eq!(r.assignment, vec![0, 0, 1]);
    }

    proptest! {
        #[test]
        fn bipartite_gap_recovered(
            within in proptest::collection::vec(0.0f64..1.0, 64),
            between in proptest::collection::vec(2.0f64..3.0, 64),
            split in 1usize..7,
        ) {
            let n = 8;
            let mut data = vec![0.0; n * n];
            let mut c = 0;
            for i in 0..n {
                for j in i + 1..n {
                    let v = if (i < split) == (j < split) { within[c] } else { between[c] };
                    data[i * n + j] = v;
                    data[j * n + i] = v;
                    c += 1;
                }
            }
            let labels = (0..n).map(|i| i.to_string()).collect();
            let d = DistanceMatrix::from_raw(Measure::new(MeasureKind::Eucl), labels, data).unwrap();
            let truth: Vec<usize> = (0..n).map(|i| usize::from(i >= split)).collect();
            for l in [Linkage::Average, Linkage::Complete, Linkage::Single] {
                let r = hier_cluster(&d, 2, l).unwrap();
                prop_assert_eq!(co_membership(&r.assignment), co_membership(&truth));
            }
        }
    }
}
