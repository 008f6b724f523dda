use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mixsearch::cluster::ClusterSet;
use mixsearch::fixture::adjusted_rand_index;
use mixsearch::report;
use mixsearch::search::{IterationRecord, SearchResult};
use sha2::{Digest, Sha256};

fn toy_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/toy")
}

fn toy_config() -> PathBuf {
    toy_dir().join("mixsearch.toml")
}

/// Runs the binary with the toy config, output in `out`, and a small candidate
/// pool so searches stay quick.
fn run(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mixsearch"))
        .arg("--config")
        .arg(toy_config())
        .arg("--out")
        .arg(out)
        .args(args)
        .env("MIXSEARCH_SEARCH__POOL_SIZE", "5000")
        .env_remove("MIXSEARCH_CONFIG")
        .output()
        .expect("binary runs")
}

fn ok(out: &Path, args: &[&str]) -> String {
    let o = run(out, args);
    let stderr = String::from_utf8_lossy(&o.stderr).into_owned();
    assert!(o.status.success(), "{args:?} failed: {stderr}");
    stderr
}

fn checksum(path: &Path) -> Vec<u8> {
    Sha256::digest(std::fs::read(path).unwrap()).to_vec()
}

fn labels() -> HashMap<String, usize> {
    std::fs::read_to_string(toy_dir().join("labels.tsv"))
        .unwrap()
        .lines()
        .map(|l| {
            let (id, b) = l.split_once('\t').unwrap();
            (id.to_string(), b.parse().unwrap())
        })
        .collect()
}

/// Cluster, prune and merge the toy corpus into `out`.
fn prepare(out: &Path) {
    ok(out, &["cluster"]);
    ok(out, &["prune-merge"]);
}

#[test]
fn cluster_recovers_blobs_and_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    ok(a.path(), &["cluster", "--seed", "5"]);
    ok(b.path(), &["cluster", "--seed", "5"]);
    let fa = a.path().join("clusters.json");
    assert_eq!(checksum(&fa), checksum(&b.path().join("clusters.json")));

    let cs = ClusterSet::read_file(&fa).unwrap();
    assert_eq!(cs.len(), 8);
    let truth = labels();
    let (found, planted): (Vec<usize>, Vec<usize>) = cs
        .assignments()
        .iter()
        .map(|(id, &c)| (c, truth[id]))
        .unzip();
    assert!(adjusted_rand_index(&found, &planted) >= 0.95);
}

#[test]
fn k_larger_than_corpus_exits_2_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run(&out, &["cluster", "--k", "513"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("k = 513"));
    assert!(!out.exists());
}

#[test]
fn bad_configuration_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[cluster]\nkk = 3\n").unwrap();
    let out = dir.path().join("out");
    let o = Command::new(env!("CARGO_BIN_EXE_mixsearch"))
        .args(["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "cluster"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());

    // Missing input file.
    let o = Command::new(env!("CARGO_BIN_EXE_mixsearch"))
        .args(["--out", out.to_str().unwrap(), "cluster", "--k", "2", "--embeddings", "/nonexistent.bin"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());

    // Environment overrides are validated too.
    let o = run(&out, &["cluster"]);
    assert!(o.status.success());
    let o = Command::new(env!("CARGO_BIN_EXE_mixsearch"))
        .args(["--config", toy_config().to_str().unwrap(), "--out", out.to_str().unwrap(), "cluster"])
        .env("MIXSEARCH_CLUSTER__NOPE", "1")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn prune_merge_defaults_fold_the_toy_corpus_to_four() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["cluster"]);
    let log = ok(dir.path(), &["prune-merge"]);
    assert!(log.contains("K_init 8 -> K_pruned 6 -> K_enhanced 4 (threshold 3, distance 1.5)"), "{log}");
    let before = ClusterSet::read_file(&dir.path().join("clusters.json")).unwrap();
    let after = ClusterSet::read_file(&dir.path().join("clusters_merged.json")).unwrap();
    assert_eq!(after.len(), 4);
    assert!(after.total_tokens() < before.total_tokens());
}

#[test]
fn prune_merge_with_zero_thresholds_is_identity() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["cluster"]);
    ok(dir.path(), &["prune-merge", "--threshold", "0", "--distance", "0"]);
    assert_eq!(
        checksum(&dir.path().join("clusters.json")),
        checksum(&dir.path().join("clusters_merged.json"))
    );
}

#[test]
fn one_shot_budget_runs_a_single_iteration() {
    let dir = tempfile::tempdir().unwrap();
    prepare(dir.path());
    ok(dir.path(), &["search", "--budgets", "112"]);
    let r = SearchResult::read_file(&dir.path().join("search_result.json")).unwrap();
    assert_eq!(r.total_evaluations, 112);
    assert_eq!(r.per_iteration_best.len(), 1);
    let h = report::read_history(&dir.path().join("history.json")).unwrap();
    assert_eq!(h.len(), 1);
}

#[test]
fn interrupted_search_resumes_to_the_same_result() {
    let whole = tempfile::tempdir().unwrap();
    prepare(whole.path());
    ok(whole.path(), &["search", "--budgets", "16,8,4"]);

    let parts = tempfile::tempdir().unwrap();
    prepare(parts.path());
    let log = ok(parts.path(), &["search", "--budgets", "16,8,4", "--stop-after", "1"]);
    assert!(log.contains("stopped after iteration 1 of 3"));
    assert!(!parts.path().join("search_result.json").exists());
    ok(parts.path(), &["search", "--budgets", "16,8,4", "--stop-after", "2"]);
    let model = parts.path().join("model.json");
    ok(parts.path(), &["search", "--budgets", "16,8,4", "--resume", "--save-predictor", model.to_str().unwrap()]);
    assert!(model.exists());

    for f in ["search_result.json", "history.json"] {
        assert_eq!(
            std::fs::read(whole.path().join(f)).unwrap(),
            std::fs::read(parts.path().join(f)).unwrap(),
            "{f}"
        );
    }

    // A different seed is not the same search.
    let o = run(parts.path(), &["search", "--budgets", "16,8,4", "--resume", "--seed", "9"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn report_and_sample_from_a_search() {
    let dir = tempfile::tempdir().unwrap();
    prepare(dir.path());
    ok(dir.path(), &["search", "--budgets", "16,8,4"]);
    ok(dir.path(), &["report"]);

    let long = std::fs::read_to_string(dir.path().join(report::LONG_CSV)).unwrap();
    assert_eq!(long.lines().count(), 1 + 3 * 4);
    let h: Vec<IterationRecord> = report::read_history(&dir.path().join("history.json")).unwrap();
    for w in h.windows(2) {
        assert!(w[1].best_so_far >= w[0].best_so_far);
    }
    let svg = std::fs::read_to_string(dir.path().join(report::HEATMAP_SVG)).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));

    ok(dir.path(), &["sample"]);
    let manifest = mixsearch::corpus::SampleManifest::read_file(&dir.path().join("sample_manifest.json")).unwrap();
    assert!(manifest.realized_tokens >= 10000 && manifest.realized_tokens < 10500);
    let first = checksum(&dir.path().join("sample.jsonl"));
    ok(dir.path(), &["sample"]);
    assert_eq!(first, checksum(&dir.path().join("sample.jsonl")));
}

#[test]
fn report_of_empty_history_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let h = dir.path().join("history.json");
    std::fs::write(&h, "[]\n").unwrap();
    let o = run(dir.path(), &["report", h.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}
