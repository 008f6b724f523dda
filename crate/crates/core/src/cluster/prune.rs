use indexmap::IndexMap;

use super::quality::{Axis, AxisScores, QualityScores, MAX_SCORE};
use super::ClusterSet;
use crate::{Error, Result};

/// Default pruning threshold on the aggregated cluster quality.
pub const DEFAULT_PRUNE_THRESHOLD: f64 = 3.0;

/// Per-cluster means of every score axis, averaged over member documents.
pub fn cluster_mean_scores(cs: &ClusterSet, scores: &QualityScores) -> Result<Vec<AxisScores>> {
    let k = cs.len();
    let mut sums = vec![[0.0f64; 4]; k];
    for (id, &c) in cs.assignments() {
        let s = scores
            .get(id)
            .ok_or_else(|| Error::Data(format!("no quality scores for document {id}")))?;
        for (acc, v) in sums[c].iter_mut().zip(s) {
            *acc += v;
        }
    }
    for (s, &n) in sums.iter_mut().zip(cs.doc_counts()) {
        s.iter_mut().for_each(|x| *x /= n as f64);
    }
    Ok(sums)
}

/// Mean of the selected axes of a cluster's mean scores.
pub fn cluster_quality(mean: &AxisScores, axes: &[Axis]) -> f64 {
    axes.iter().map(|a| mean[a.index()]).sum::<f64>() / axes.len() as f64
}

/// Drops clusters whose aggregated quality falls below `threshold`.
///
/// Survivors keep their documents and centroids and are renumbered in their
/// original order. The returned set carries the mean score table.
pub fn prune_clusters(
    cs: &ClusterSet,
    scores: &QualityScores,
    threshold: f64,
    axes: &[Axis],
) -> Result<ClusterSet> {
    if !(0.0..=MAX_SCORE).contains(&threshold) {
        return Err(Error::InvalidArgument(format!(
            "prune threshold {threshold} outside [0, {MAX_SCORE}]"
        )));
    }
    if axes.is_empty() {
        return Err(Error::InvalidArgument("no quality axes selected".into()));
    }
    let means = cluster_mean_scores(cs, scores)?;
    let keep: Vec<bool> = means
        .iter()
        .map(|m| cluster_quality(m, axes) >= threshold)
        .collect();
    let survivors = keep.iter().filter(|&&k| k).count();
    if survivors == 0 {
        return Err(Error::EmptyResult(format!(
            "every cluster scored below the threshold {threshold}"
        )));
    }

    let mut remap = vec![None; cs.len()];
    let mut next = 0;
    for (c, &k) in keep.iter().enumerate() {
        if k {
            remap[c] = Some(next);
            next += 1;
        }
    }
    let pick = |c: usize| keep[c];
    let assignments: IndexMap<String, usize> = cs
        .assignments()
        .iter()
        .filter_map(|(id, &c)| remap[c].map(|n| (id.clone(), n)))
        .collect();

    Ok(ClusterSet::from_parts_unchecked(
        cs.dim(),
        filter(cs.centroids(), pick),
        assignments,
        filter(cs.token_totals(), pick),
        filter(cs.doc_counts(), pick),
        Some(filter(&means, pick)),
        filter(cs.lineage(), pick),
    ))
}

fn filter<T: Clone>(items: &[T], keep: impl Fn(usize) -> bool) -> Vec<T> {
    items
        .iter()
        .enumerate()
        .filter(|(i, _)| keep(*i))
        .map(|(_, x)| x.clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::{kmeans_fit, EmbeddingMatrix};

    fn two_blobs() -> (EmbeddingMatrix, ClusterSet) {
        let rows = vec![vec![0.0], vec![0.1], vec![10.0], vec![10.2], vec![10.1]];
        let ids: Vec<String> = (0..5).map(|i| format!("d{i}")).collect();
        let emb = EmbeddingMatrix::from_rows(rows, ids, vec![5, 6, 7, 8, 9]).unwrap();
        let cs = kmeans_fit(&emb, 2, 0, 20).unwrap().clusters;
        (emb, cs)
    }

    fn scores(cs: &ClusterSet, high: usize, edu: [f64; 2]) -> QualityScores {
        QualityScores::new(cs.assignments().iter().map(|(id, &c)| {
            let e = if c == high { edu[0] } else { edu[1] };
            (id.clone(), [1.0, e, 1.0, 1.0])
        }))
        .unwrap()
    }

    #[test]
    fn drops_low_cluster_on_selected_axis() {
        let (_, cs) = two_blobs();
        let high = cs.cluster_of("d0").unwrap();
        let q = scores(&cs, high, [3.4, 2.1]);
        let pruned = prune_clusters(&cs, &q, 3.0, &[Axis::EducationalValue]).unwrap();
        assert_eq!(pruned.len(), 1);
        assert_eq!(pruned.centroids()[0], cs.centroids()[high]);
        assert_eq!(pruned.token_totals(), &[11]);
        assert!(pruned.cluster_of("d2").is_none());
        assert_eq!(pruned.cluster_of("d1"), Some(0));
        assert_eq!(pruned.mean_scores().unwrap()[0][1], 3.4);
        pruned.validate().unwrap();
    }

    #[test]
    fn zero_threshold_keeps_everything() {
        let (_, cs) = two_blobs();
        let q = scores(&cs, 0, [0.0, 0.0]);
        let pruned = prune_clusters(&cs, &q, 0.0, &Axis::ALL).unwrap();
        assert_eq!(pruned.len(), 2);
        assert_eq!(pruned.assignments(), cs.assignments());
        assert_eq!(pruned.centroids(), cs.centroids());
    }

    #[test]
    fn all_pruned_is_error() {
        let (_, cs) = two_blobs();
        let q = scores(&cs, 0, [1.0, 1.0]);
        assert!(matches!(
            prune_clusters(&cs, &q, 3.0, &Axis::ALL),
            Err(Error::EmptyResult(_))
        ));
    }

    #[test]
    fn aggregation_averages_axes() {
        let (_, cs) = two_blobs();
        // Cluster quality over all four axes: (1 + e + 1 + 1) / 4.
        let high = cs.cluster_of("d0").unwrap();
        let q = scores(&cs, high, [5.0, 4.9]);
        let pruned = prune_clusters(&cs, &q, 2.0, &Axis::ALL).unwrap();
        assert_eq!(pruned.len(), 1);
    }

    #[test]
    fn argument_guards() {
        let (_, cs) = two_blobs();
        let q = scores(&cs, 0, [3.0, 3.0]);
        assert!(prune_clusters(&cs, &q, 5.5, &Axis::ALL).is_err());
        assert!(prune_clusters(&cs, &q, 3.0, &[]).is_err());
        let partial = QualityScores::new([("d0".to_string(), [3.0; 4])]).unwrap();
        assert!(matches!(prune_clusters(&cs, &partial, 3.0, &Axis::ALL), Err(Error::Data(_))));
    }
}
