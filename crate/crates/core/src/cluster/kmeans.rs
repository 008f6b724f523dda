//! Seeded Lloyd's k-means with k-means++ initialization.

use indexmap::IndexMap;
use rand::Rng;

use super::{ClusterSet, EmbeddingMatrix};
use crate::{par, seed, Error, Result};

pub const DEFAULT_MAX_ITERS: usize = 100;
/// Independent seedings tried by [`kmeans_fit`]; the lowest final SSE wins.
pub const DEFAULT_RESTARTS: usize = 4;

/// Result of a k-means run, with the per-iteration objective trace.
#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub clusters: ClusterSet,
    /// Cluster index of each row, in row order.
    pub labels: Vec<usize>,
    /// Within-cluster SSE after the initial assignment and after every Lloyd iteration.
    pub sse_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl KMeansFit {
    pub fn sse(&self) -> f64 {
        *self.sse_history.last().expect("history is never empty")
    }
}

#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        acc += d * d;
    }
    acc
}

/// Chooses `k` initial centroids by greedy k-means++ seeding.
///
/// The first center is drawn uniformly. Each later step draws `2 + ln k`
/// candidates with probability proportional to squared distance from the nearest
/// chosen center and keeps the one that lowers the total squared distance most
/// (earliest candidate on ties). When every point coincides with a center, the
/// draw falls back to uniform.
pub fn kmeans_pp_init(emb: &EmbeddingMatrix, k: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    check_args(emb, k, 1)?;
    let n = emb.len();
    let trials = 2 + (k as f64).ln().floor() as usize;
    let mut rng = seed::rng(seed);
    let first = rng.random_range(0..n);
    let mut centers = vec![emb.row(first).to_vec()];
    let mut nearest: Vec<f64> = par::map_range(n, |i| squared_distance(emb.row(i), &centers[0]));
    while centers.len() < k {
        let total: f64 = nearest.iter().sum();
        let mut best: Option<(f64, usize, Vec<f64>)> = None;
        for _ in 0..trials {
            let pick = if total > 0.0 {
                weighted_pick(&nearest, rng.random::<f64>() * total)
            } else {
                rng.random_range(0..n)
            };
            let c = emb.row(pick);
            let update: Vec<f64> = par::map_range(n, |i| squared_distance(emb.row(i), c).min(nearest[i]));
            let potential: f64 = update.iter().sum();
            if best.as_ref().is_none_or(|(p, _, _)| potential < *p) {
                best = Some((potential, pick, update));
            }
        }
        let (_, pick, update) = best.expect("at least one trial");
        centers.push(emb.row(pick).to_vec());
        nearest = update;
    }
    Ok(centers)
}

/// Index whose cumulative weight first exceeds `target`, skipping zero weights.
fn weighted_pick(weights: &[f64], target: f64) -> usize {
    let mut acc = 0.0;
    for (i, &d) in weights.iter().enumerate() {
        acc += d;
        if d > 0.0 && acc > target {
            return i;
        }
    }
    // Rounding can leave `acc` a hair below `target`; take the last positive weight.
    weights.iter().rposition(|&d| d > 0.0).unwrap_or(0)
}

/// Runs k-means++ seeding followed by Lloyd iterations, [`DEFAULT_RESTARTS`] times.
pub fn kmeans_fit(emb: &EmbeddingMatrix, k: usize, seed: u64, max_iters: usize) -> Result<KMeansFit> {
    kmeans_fit_restarts(emb, k, seed, max_iters, DEFAULT_RESTARTS)
}

/// Seed used for the k-means++ draw of restart `r`. Restart 0 uses `seed` itself.
pub fn restart_seed(seed: u64, r: usize) -> u64 {
    if r == 0 {
        seed
    } else {
        seed::derive(seed, &[seed::TAG_RESTART, r as u64])
    }
}

/// Keeps the restart with the lowest final SSE; ties go to the earliest restart.
pub fn kmeans_fit_restarts(
    emb: &EmbeddingMatrix,
    k: usize,
    seed: u64,
    max_iters: usize,
    restarts: usize,
) -> Result<KMeansFit> {
    check_args(emb, k, max_iters)?;
    if restarts == 0 {
        return Err(Error::InvalidArgument("restarts must be at least 1".into()));
    }
    let mut best: Option<KMeansFit> = None;
    for r in 0..restarts {
        let init = kmeans_pp_init(emb, k, restart_seed(seed, r))?;
        let fit = lloyd_from(emb, init, max_iters)?;
        if best.as_ref().is_none_or(|b| fit.sse() < b.sse()) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Lloyd iterations from explicit starting centroids.
///
/// Each iteration repairs empty clusters, moves centroids to member means and
/// reassigns every row to its nearest centroid (lowest index on ties). Stops when
/// no assignment changes or after `max_iters` iterations.
pub fn lloyd_from(emb: &EmbeddingMatrix, init: Vec<Vec<f64>>, max_iters: usize) -> Result<KMeansFit> {
    let k = init.len();
    check_args(emb, k, max_iters)?;
    if init.iter().any(|c| c.len() != emb.dim()) {
        return Err(Error::InvalidArgument("initial centroid dimension mismatch".into()));
    }

    let mut centroids = init;
    let (mut labels, mut dists) = assign(emb, &centroids);
    let mut sse_history = vec![dists.iter().sum::<f64>()];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < max_iters {
        iterations += 1;
        repair_empty(&mut labels, &mut dists, k);
        centroids = means(emb, &labels, k);
        let (next, next_dists) = assign(emb, &centroids);
        sse_history.push(next_dists.iter().sum());
        let changed = next.iter().zip(&labels).filter(|(a, b)| a != b).count();
        labels = next;
        dists = next_dists;
        if changed == 0 {
            converged = true;
            break;
        }
    }
    if !converged {
        // Final labels came from the last assignment; make centroids agree with them.
        repair_empty(&mut labels, &mut dists, k);
        centroids = means(emb, &labels, k);
    }

    let clusters = build_set(emb, centroids, &labels);
    Ok(KMeansFit {
        clusters,
        labels,
        sse_history,
        iterations,
        converged,
    })
}

fn check_args(emb: &EmbeddingMatrix, k: usize, max_iters: usize) -> Result<()> {
    if k == 0 || k > emb.len() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} must be between 1 and the number of documents ({})",
            emb.len()
        )));
    }
    if max_iters == 0 {
        return Err(Error::InvalidArgument("max_iters must be at least 1".into()));
    }
    Ok(())
}

fn assign(emb: &EmbeddingMatrix, centroids: &[Vec<f64>]) -> (Vec<usize>, Vec<f64>) {
    let pairs = par::map_range(emb.len(), |i| {
        let row = emb.row(i);
        let mut best = 0;
        let mut best_d = squared_distance(row, &centroids[0]);
        for (c, centroid) in centroids.iter().enumerate().skip(1) {
            let d = squared_distance(row, centroid);
            if d < best_d {
                best = c;
                best_d = d;
            }
        }
        (best, best_d)
    });
    pairs.into_iter().unzip()
}

/// Moves the point farthest from its centroid into each empty cluster.
///
/// Candidates must come from clusters with at least two members so no new empty
/// cluster appears. A moved point becomes its new cluster's sole member, so its
/// distance is reset to zero.
fn repair_empty(labels: &mut [usize], dists: &mut [f64], k: usize) {
    let mut sizes = vec![0usize; k];
    for &l in labels.iter() {
        sizes[l] += 1;
    }
    for empty in 0..k {
        if sizes[empty] > 0 {
            continue;
        }
        let mut pick: Option<usize> = None;
        for i in 0..labels.len() {
            if sizes[labels[i]] < 2 {
                continue;
            }
            if pick.is_none_or(|p| dists[i] > dists[p]) {
                pick = Some(i);
            }
        }
        let p = pick.expect("k <= n guarantees a donor cluster");
        sizes[labels[p]] -= 1;
        labels[p] = empty;
        sizes[empty] = 1;
        dists[p] = 0.0;
    }
}

fn means(emb: &EmbeddingMatrix, labels: &[usize], k: usize) -> Vec<Vec<f64>> {
    let d = emb.dim();
    let mut sums = vec![vec![0.0; d]; k];
    let mut counts = vec![0usize; k];
    // Fixed row order keeps the sums identical at any thread count.
    for (i, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        for (s, x) in sums[l].iter_mut().zip(emb.row(i)) {
            *s += x;
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        debug_assert!(c > 0);
        let c = c as f64;
        s.iter_mut().for_each(|x| *x /= c);
    }
    sums
}

fn build_set(emb: &EmbeddingMatrix, centroids: Vec<Vec<f64>>, labels: &[usize]) -> ClusterSet {
    let k = centroids.len();
    let mut token_totals = vec![0u64; k];
    let mut doc_counts = vec![0usize; k];
    let mut assignments = IndexMap::with_capacity(emb.len());
    for (i, &l) in labels.iter().enumerate() {
        token_totals[l] += emb.token_counts()[i];
        doc_counts[l] += 1;
        assignments.insert(emb.doc_ids()[i].clone(), l);
    }
    ClusterSet::from_parts_unchecked(
        emb.dim(),
        centroids,
        assignments,
        token_totals,
        doc_counts,
        None,
        (0..k).map(|c| vec![c]).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn matrix(rows: Vec<Vec<f64>>) -> EmbeddingMatrix {
        let n = rows.len();
        EmbeddingMatrix::from_rows(
            rows,
            (0..n).map(|i| format!("d{i}")).collect(),
            vec![1; n],
        )
        .unwrap()
    }

    /// Minimum SSE over every 2-partition, by enumeration.
    fn best_two_partition_sse(points: &[Vec<f64>]) -> f64 {
        let n = points.len();
        let mut best = f64::INFINITY;
        for mask in 1..(1u32 << n) - 1 {
            let mut sse = 0.0;
            for side in [true, false] {
                let members: Vec<&Vec<f64>> = (0..n)
                    .filter(|i| ((mask >> i) & 1 == 1) == side)
                    .map(|i| &points[i])
                    .collect();
                let d = members[0].len();
                let mean: Vec<f64> = (0..d)
                    .map(|j| members.iter().map(|p| p[j]).sum::<f64>() / members.len() as f64)
                    .collect();
                sse += members.iter().map(|p| squared_distance(p, &mean)).sum::<f64>();
            }
            best = best.min(sse);
        }
        best
    }

    #[test]
    fn unit_square_splits_in_pairs() {
        let pts = vec![
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 1.0],
        ];
        let optimum = best_two_partition_sse(&pts);
        assert_abs_diff_eq!(optimum, 1.0, epsilon = 1e-12);

        let fit = kmeans_fit(&matrix(pts), 2, 0, DEFAULT_MAX_ITERS).unwrap();
        assert_eq!(fit.clusters.doc_counts(), &[2, 2]);
        assert_abs_diff_eq!(fit.sse(), optimum, epsilon = 1e-12);
        for c in fit.clusters.centroids() {
            // Edge midpoint: one coordinate is 0.5, the other 0 or 1.
            let halves = c.iter().filter(|&&x| x == 0.5).count();
            let ends = c.iter().filter(|&&x| x == 0.0 || x == 1.0).count();
            assert_eq!((halves, ends), (1, 1), "{c:?}");
        }
    }

    #[test]
    fn single_restart_can_stall_on_the_diagonal() {
        // Diagonal seeds leave a 3 + 1 split that Lloyd cannot escape.
        let m = matrix(vec![
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 1.0],
        ]);
        let fit = lloyd_from(&m, vec![vec![0.0, 0.0], vec![1.0, 1.0]], 10).unwrap();
        assert_eq!(fit.clusters.doc_counts(), &[3, 1]);
        assert!(fit.converged);
        assert!(kmeans_fit_restarts(&m, 2, 0, 10, 0).is_err());
    }

    #[test]
    fn k_equals_n_gives_singletons() {
        let pts: Vec<Vec<f64>> = (0..7).map(|i| vec![i as f64, (i * i) as f64 * 0.1]).collect();
        let fit = kmeans_fit(&matrix(pts), 7, 3, DEFAULT_MAX_ITERS).unwrap();
        assert!(fit.clusters.doc_counts().iter().all(|&c| c == 1));
        assert_eq!(fit.sse(), 0.0);
    }

    #[test]
    fn k_one_gives_mean() {
        let pts = vec![vec![1.0, 2.0], vec![3.0, -2.0], vec![5.0, 6.0]];
        let fit = kmeans_fit(&matrix(pts), 1, 9, DEFAULT_MAX_ITERS).unwrap();
        assert_abs_diff_eq!(fit.clusters.centroids()[0][0], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.clusters.centroids()[0][1], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn k_above_n_is_invalid() {
        let m = matrix(vec![vec![0.0], vec![1.0]]);
        assert!(matches!(kmeans_fit(&m, 3, 0, 10), Err(Error::InvalidArgument(_))));
        assert!(matches!(kmeans_fit(&m, 0, 0, 10), Err(Error::InvalidArgument(_))));
        assert!(matches!(kmeans_fit(&m, 1, 0, 0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn duplicate_points_keep_k_clusters() {
        let pts = vec![vec![1.0, 1.0]; 6];
        let fit = kmeans_fit(&matrix(pts), 3, 1, 10).unwrap();
        assert_eq!(fit.clusters.len(), 3);
        assert!(fit.clusters.doc_counts().iter().all(|&c| c >= 1));
        assert_eq!(fit.clusters.doc_counts().iter().sum::<usize>(), 6);
    }

    #[test]
    fn empty_cluster_repair_takes_farthest_point() {
        // Both starting centroids sit at the left group, so cluster 1 starts empty.
        let pts = vec![vec![0.0], vec![0.1], vec![10.0]];
        let m = matrix(pts);
        let fit = lloyd_from(&m, vec![vec![0.0], vec![-5.0]], 10).unwrap();
        assert_eq!(fit.clusters.doc_counts(), &[2, 1]);
        assert_eq!(fit.labels, vec![0, 0, 1]);
        assert_abs_diff_eq!(fit.clusters.centroids()[1][0], 10.0);
    }

    #[test]
    fn deterministic_per_seed() {
        let pts: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 1.3).cos()])
            .collect();
        let m = matrix(pts);
        let a = kmeans_fit(&m, 4, 11, 50).unwrap();
        let b = kmeans_fit(&m, 4, 11, 50).unwrap();
        assert_eq!(a.clusters.to_json().unwrap(), b.clusters.to_json().unwrap());
        assert!(a.sse_history.windows(2).all(|w| w[1] <= w[0]));
    }
}
