//! Small synthetic corpus with planted cluster structure, for demos and tests.
//!
//! 512 documents in 16 dimensions, drawn around 8 directions:
//!
//! * blobs 0/1 and 2/3 are near-duplicate pairs, 0.4 rad apart, each pair
//!   straddling a vertex of a regular tetrahedron;
//! * blobs 4 and 5 sit on the two remaining tetrahedron vertices;
//! * blobs 6 and 7 sit on their own axes and carry quality scores below 3.
//!
//! Tetrahedron vertices are 1.633 apart on the unit sphere, so after the two
//! low-quality blobs are pruned, merging at distance 1.5 folds exactly the two
//! pairs and leaves four clusters.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::cluster::{AxisScores, EmbeddingMatrix, QualityScores};
use crate::corpus::{write_jsonl, Document};
use crate::{seed, Error, Result};

pub const TOY_DOCS: usize = 512;
pub const TOY_DIM: usize = 16;
pub const TOY_BLOBS: usize = 8;
pub const TOY_SEED: u64 = 0;
pub const NEAR_DUPLICATE_PAIRS: [(usize, usize); 2] = [(0, 1), (2, 3)];
pub const LOW_QUALITY_BLOBS: [usize; 2] = [6, 7];

const PAIR_HALF_ANGLE: f64 = 0.2;
const NOISE_SD: f64 = 0.02;

const TOPICS: [&str; TOY_BLOBS] = [
    "astronomy", "astrophysics", "cooking", "baking", "law", "music", "spam", "boilerplate",
];
const WORDS: [&[&str]; TOY_BLOBS] = [
    &["star", "orbit", "telescope", "planet", "galaxy", "light"],
    &["plasma", "nebula", "redshift", "quasar", "stellar", "flux"],
    &["recipe", "simmer", "onion", "sauce", "pan", "season"],
    &["flour", "oven", "dough", "butter", "rise", "crust"],
    &["court", "statute", "appeal", "contract", "ruling", "clause"],
    &["melody", "chord", "tempo", "rhythm", "guitar", "score"],
    &["click", "free", "offer", "winner", "deal", "now"],
    &["cookie", "menu", "login", "footer", "subscribe", "share"],
];

/// File names used by [`ToyFixture::write_dir`].
pub struct ToyFiles {
    pub embeddings: PathBuf,
    pub sidecar: PathBuf,
    pub scores: PathBuf,
    pub documents: PathBuf,
    pub labels: PathBuf,
}

impl ToyFiles {
    pub fn in_dir(dir: &Path) -> Self {
        ToyFiles {
            embeddings: dir.join("embeddings.bin"),
            sidecar: dir.join("embeddings.tsv"),
            scores: dir.join("scores.tsv"),
            documents: dir.join("documents.jsonl"),
            labels: dir.join("labels.tsv"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ToyFixture {
    pub embeddings: EmbeddingMatrix,
    pub scores: QualityScores,
    pub documents: Vec<Document>,
    /// Planted blob of each row.
    pub labels: Vec<usize>,
}

/// Unit direction of each blob.
pub fn blob_directions() -> Vec<Vec<f64>> {
    let r3 = 3f64.sqrt();
    let tetra = [
        [1.0, 1.0, 1.0],
        [1.0, -1.0, -1.0],
        [-1.0, 1.0, -1.0],
        [-1.0, -1.0, 1.0],
    ];
    let vertex = |v: usize| {
        let mut x = vec![0.0; TOY_DIM];
        for j in 0..3 {
            x[j] = tetra[v][j] / r3;
        }
        x
    };
    // Tilt a vertex toward a spare axis by ±PAIR_HALF_ANGLE.
    let tilted = |v: usize, axis: usize, sign: f64| {
        let mut x = vertex(v);
        x.iter_mut().for_each(|c| *c *= PAIR_HALF_ANGLE.cos());
        x[axis] = sign * PAIR_HALF_ANGLE.sin();
        x
    };
    let axis = |a: usize| {
        let mut x = vec![0.0; TOY_DIM];
        x[a] = 1.0;
        x
    };
    vec![
        tilted(0, 4, 1.0),
        tilted(0, 4, -1.0),
        tilted(1, 5, 1.0),
        tilted(1, 5, -1.0),
        vertex(2),
        vertex(3),
        axis(8),
        axis(9),
    ]
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Generates the toy corpus; documents are shuffled so blobs are interleaved.
pub fn toy_fixture(seed: u64) -> Result<ToyFixture> {
    let mut rng = seed::rng(seed);
    let dirs = blob_directions();
    let per_blob = TOY_DOCS / TOY_BLOBS;
    let mut labels: Vec<usize> = (0..TOY_DOCS).map(|i| i / per_blob).collect();
    labels.shuffle(&mut rng);

    let mut data = Vec::with_capacity(TOY_DOCS * TOY_DIM);
    let mut doc_ids = Vec::with_capacity(TOY_DOCS);
    let mut tokens = Vec::with_capacity(TOY_DOCS);
    let mut scores = Vec::with_capacity(TOY_DOCS);
    let mut documents = Vec::with_capacity(TOY_DOCS);
    for (i, &b) in labels.iter().enumerate() {
        for &c in &dirs[b] {
            let z: f64 = rng.sample(StandardNormal);
            // Stored as f32 on disk; keep the in-memory copy identical.
            data.push((c + NOISE_SD * z) as f32 as f64);
        }
        let id = format!("doc{i:04}");
        let t: u64 = rng.random_range(50..=500);
        let low = LOW_QUALITY_BLOBS.contains(&b);
        let mut s: AxisScores = [0.0; 4];
        for x in s.iter_mut() {
            *x = if low {
                round2(rng.random_range(1.0..2.6))
            } else {
                round2(rng.random_range(3.4..5.0))
            };
        }
        // All four axes share a range so any axis subset prunes the same blobs.
        let n_words = 8 + (t as usize % 9);
        let words: Vec<&str> = (0..n_words)
            .map(|_| WORDS[b][rng.random_range(0..WORDS[b].len())])
            .collect();
        documents.push(Document {
            doc_id: id.clone(),
            token_count: t,
            text: format!("{} note: {}", TOPICS[b], words.join(" ")),
        });
        doc_ids.push(id.clone());
        tokens.push(t);
        scores.push((id, s));
    }
    Ok(ToyFixture {
        embeddings: EmbeddingMatrix::new(data, TOY_DIM, doc_ids, tokens)?,
        scores: QualityScores::new(scores)?,
        documents,
        labels,
    })
}

impl ToyFixture {
    pub fn write_dir(&self, dir: &Path) -> Result<ToyFiles> {
        std::fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
        let files = ToyFiles::in_dir(dir);
        self.embeddings.write_files(&files.embeddings, &files.sidecar)?;
        self.scores.write_file(&files.scores, self.embeddings.doc_ids())?;
        write_jsonl(&files.documents, self.documents.iter())?;
        let labels: String = self
            .embeddings
            .doc_ids()
            .iter()
            .zip(&self.labels)
            .map(|(id, b)| format!("{id}\t{b}\n"))
            .collect();
        std::fs::write(&files.labels, labels).map_err(|e| Error::file(&files.labels, e))?;
        Ok(files)
    }
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0u64; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1;
    }
    let pairs = |n: u64| (n * n.saturating_sub(1) / 2) as f64;
    let index: f64 = table.iter().flatten().map(|&n| pairs(n)).sum();
    let rows: f64 = table.iter().map(|r| pairs(r.iter().sum())).sum();
    let cols: f64 = (0..kb).map(|j| pairs(table.iter().map(|r| r[j]).sum())).sum();
    let total = pairs(a.len() as u64);
    let expected = rows * cols / total;
    let max = (rows + cols) / 2.0;
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::kmeans::squared_distance;

    #[test]
    fn directions_are_unit_and_spaced_as_planned() {
        let d = blob_directions();
        for v in &d {
            assert!((squared_distance(v, &[0.0; TOY_DIM]) - 1.0).abs() < 1e-12);
        }
        let dist = |a: usize, b: usize| squared_distance(&d[a], &d[b]).sqrt();
        assert!((dist(0, 1) - 2.0 * PAIR_HALF_ANGLE.sin()).abs() < 1e-12);
        assert!(dist(0, 1) < 0.5 && dist(2, 3) < 0.5);
        // Pair members stay farther than the merge distance from everything else,
        // and so do the pair midpoints left after merging.
        for a in 0..6 {
            for b in (a + 1)..6 {
                if (a, b) != (0, 1) && (a, b) != (2, 3) {
                    assert!(dist(a, b) > 1.5, "{a} {b} {}", dist(a, b));
                }
            }
        }
        let mid = |a: usize, b: usize| -> Vec<f64> { d[a].iter().zip(&d[b]).map(|(x, y)| (x + y) / 2.0).collect() };
        let kept = [mid(0, 1), mid(2, 3), d[4].clone(), d[5].clone()];
        for a in 0..4 {
            for b in (a + 1)..4 {
                assert!(squared_distance(&kept[a], &kept[b]).sqrt() > 1.6);
            }
        }
    }

    #[test]
    fn fixture_is_deterministic_and_balanced() {
        let a = toy_fixture(TOY_SEED).unwrap();
        let b = toy_fixture(TOY_SEED).unwrap();
        assert_eq!(a.embeddings, b.embeddings);
        assert_eq!(a.documents, b.documents);
        for blob in 0..TOY_BLOBS {
            assert_eq!(a.labels.iter().filter(|&&l| l == blob).count(), 64);
        }
        for (id, &l) in a.embeddings.doc_ids().iter().zip(&a.labels) {
            let s = a.scores.get(id).unwrap();
            let mean = s.iter().sum::<f64>() / 4.0;
            assert_eq!(mean < 3.0, LOW_QUALITY_BLOBS.contains(&l));
        }
    }

    #[test]
    fn ari_examples() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[1, 1, 0, 0]), 1.0);
        // Hand count: pairs agreeing in both = 1, row pairs = 2, col pairs = 3, n pairs = 6.
        let v = adjusted_rand_index(&[0, 0, 1, 1], &[0, 0, 0, 1]);
        let expected = (1.0 - 2.0 * 3.0 / 6.0) / ((2.0 + 3.0) / 2.0 - 2.0 * 3.0 / 6.0);
        assert!((v - expected).abs() < 1e-12);
    }
}
