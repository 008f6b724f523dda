use indexmap::IndexMap;

use super::kmeans::squared_distance;
use super::quality::AxisScores;
use super::ClusterSet;
use crate::{Error, Result};

/// Default centroid distance below which clusters are folded together.
pub const DEFAULT_MERGE_DISTANCE: f64 = 1.5;

/// Repeatedly merges the closest pair of centroids while their Euclidean distance
/// is below `distance_threshold`.
///
/// The merged centroid is the token-weighted mean of the two; mean scores are
/// document-weighted so they stay exact per-document means. Ties go to the
/// lexicographically smallest index pair, and the merged cluster keeps the lower
/// index. Output clusters are renumbered in order.
pub fn merge_clusters(cs: &ClusterSet, distance_threshold: f64) -> Result<ClusterSet> {
    if distance_threshold.is_nan() || distance_threshold < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "merge distance {distance_threshold} must be non-negative"
        )));
    }
    let k = cs.len();
    let mut centroids = cs.centroids().to_vec();
    let mut tokens = cs.token_totals().to_vec();
    let mut docs = cs.doc_counts().to_vec();
    let mut scores: Option<Vec<AxisScores>> = cs.mean_scores().map(<[_]>::to_vec);
    let mut lineage = cs.lineage().to_vec();
    let mut alive = vec![true; k];
    // Current cluster index that each input cluster was folded into.
    let mut owner: Vec<usize> = (0..k).collect();

    let mut dist = vec![vec![f64::INFINITY; k]; k];
    for i in 0..k {
        for j in (i + 1)..k {
            dist[i][j] = squared_distance(&centroids[i], &centroids[j]).sqrt();
        }
    }

    loop {
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..k {
            if !alive[i] {
                continue;
            }
            for j in (i + 1)..k {
                if alive[j] && best.is_none_or(|(_, _, d)| dist[i][j] < d) {
                    best = Some((i, j, dist[i][j]));
                }
            }
        }
        let Some((i, j, d)) = best else { break };
        if d >= distance_threshold {
            break;
        }

        let (ti, tj) = (tokens[i] as f64, tokens[j] as f64);
        let merged: Vec<f64> = centroids[i]
            .iter()
            .zip(&centroids[j])
            .map(|(a, b)| (ti * a + tj * b) / (ti + tj))
            .collect();
        centroids[i] = merged;
        if let Some(s) = scores.as_mut() {
            let (ni, nj) = (docs[i] as f64, docs[j] as f64);
            let sj = s[j];
            for (a, b) in s[i].iter_mut().zip(sj) {
                *a = (ni * *a + nj * b) / (ni + nj);
            }
        }
        tokens[i] += tokens[j];
        docs[i] += docs[j];
        let folded = std::mem::take(&mut lineage[j]);
        lineage[i].extend(folded);
        lineage[i].sort_unstable();
        alive[j] = false;
        for o in owner.iter_mut() {
            if *o == j {
                *o = i;
            }
        }
        for m in 0..k {
            if alive[m] && m != i {
                let d = squared_distance(&centroids[i], &centroids[m]).sqrt();
                let (a, b) = if m < i { (m, i) } else { (i, m) };
                dist[a][b] = d;
            }
        }
    }

    let mut new_index = vec![usize::MAX; k];
    let mut next = 0;
    for c in 0..k {
        if alive[c] {
            new_index[c] = next;
            next += 1;
        }
    }
    let keep = |v: usize| alive[v];
    let assignments: IndexMap<String, usize> = cs
        .assignments()
        .iter()
        .map(|(id, &c)| (id.clone(), new_index[owner[c]]))
        .collect();

    Ok(ClusterSet::from_parts_unchecked(
        cs.dim(),
        select(centroids, keep),
        assignments,
        select(tokens, keep),
        select(docs, keep),
        scores.map(|s| select(s, keep)),
        select(lineage, keep),
    ))
}

fn select<T>(items: Vec<T>, keep: impl Fn(usize) -> bool) -> Vec<T> {
    items
        .into_iter()
        .enumerate()
        .filter(|(i, _)| keep(*i))
        .map(|(_, x)| x)
        .collect()
}
