use std::collections::BTreeSet;

use mixsearch::cluster::{
    kmeans_fit, merge_clusters, prune_clusters, Axis, ClusterSet, DEFAULT_MAX_ITERS,
    DEFAULT_MERGE_DISTANCE, DEFAULT_PRUNE_THRESHOLD,
};
use mixsearch::fixture::{
    adjusted_rand_index, toy_fixture, LOW_QUALITY_BLOBS, NEAR_DUPLICATE_PAIRS, TOY_SEED,
};

const ALL_AXES: [Axis; 4] = [
    Axis::OverallQuality,
    Axis::EducationalValue,
    Axis::InformationalValue,
    Axis::Advertisement,
];

/// Planted blobs covered by each cluster, read off the member documents.
fn blobs_of(cs: &ClusterSet, doc_blob: &std::collections::HashMap<&str, usize>) -> Vec<BTreeSet<usize>> {
    (0..cs.len())
        .map(|c| cs.members(c).map(|id| doc_blob[id]).collect())
        .collect()
}

#[test]
fn toy_fixture_recovers_planted_structure() {
    let fx = toy_fixture(TOY_SEED).unwrap();
    let emb = fx.embeddings.l2_normalize().unwrap();
    let doc_blob = emb
        .doc_ids()
        .iter()
        .map(String::as_str)
        .zip(fx.labels.iter().copied())
        .collect();

    for seed in 0..10 {
        let fit = kmeans_fit(&emb, 8, seed, DEFAULT_MAX_ITERS).unwrap();
        let ari = adjusted_rand_index(&fit.labels, &fx.labels);
        assert!(ari >= 0.95, "seed {seed}: ari {ari}");

        let pruned = prune_clusters(&fit.clusters, &fx.scores, DEFAULT_PRUNE_THRESHOLD, &ALL_AXES).unwrap();
        assert_eq!(pruned.len(), 6);
        let dropped: BTreeSet<usize> = blobs_of(&fit.clusters, &doc_blob)
            .into_iter()
            .filter(|b| !blobs_of(&pruned, &doc_blob).contains(b))
            .flatten()
            .collect();
        assert_eq!(dropped, LOW_QUALITY_BLOBS.into_iter().collect());
        let kept_tokens: u64 = fit
            .clusters
            .token_totals()
            .iter()
            .zip(blobs_of(&fit.clusters, &doc_blob))
            .filter(|(_, b)| b.is_disjoint(&LOW_QUALITY_BLOBS.into_iter().collect()))
            .map(|(t, _)| t)
            .sum();
        assert_eq!(pruned.total_tokens(), kept_tokens);

        let merged = merge_clusters(&pruned, DEFAULT_MERGE_DISTANCE).unwrap();
        assert_eq!(merged.len(), 4);
        assert_eq!(merged.total_tokens(), pruned.total_tokens());
        let groups = blobs_of(&merged, &doc_blob);
        for (a, b) in NEAR_DUPLICATE_PAIRS {
            assert!(groups.contains(&[a, b].into_iter().collect()), "{groups:?}");
        }
        assert!(groups.contains(&[4].into_iter().collect()));
        assert!(groups.contains(&[5].into_iter().collect()));
    }
}

#[test]
fn bundled_fixture_files_match_the_generator() {
    let bundled = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/toy");
    let dir = tempfile::tempdir().unwrap();
    toy_fixture(TOY_SEED).unwrap().write_dir(dir.path()).unwrap();
    for name in ["embeddings.bin", "embeddings.tsv", "scores.tsv", "documents.jsonl", "labels.tsv"] {
        assert_eq!(
            std::fs::read(bundled.join(name)).unwrap(),
            std::fs::read(dir.path().join(name)).unwrap(),
            "{name}"
        );
    }
}
