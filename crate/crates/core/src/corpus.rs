//! Token-proportional sampling of documents from cluster stores.

use std::collections::HashSet;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cluster::ClusterSet;
use crate::error::Deficit;
use crate::simplex::MixtureWeights;
use crate::{par, seed, Error, Result};

/// One stored document. The payload is carried through untouched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub token_count: u64,
    #[serde(default)]
    pub text: String,
}

/// Documents grouped by cluster, in the cluster order of a [`ClusterSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterStore {
    clusters: Vec<Vec<Document>>,
}

impl ClusterStore {
    pub fn new(clusters: Vec<Vec<Document>>) -> Result<Self> {
        let mut ids = HashSet::new();
        for (c, docs) in clusters.iter().enumerate() {
            for d in docs {
                if d.token_count == 0 {
                    return Err(Error::Data(format!(
                        "document {} in cluster {c} has zero tokens",
                        d.doc_id
                    )));
                }
                if !ids.insert(d.doc_id.as_str()) {
                    return Err(Error::Data(format!("duplicate document id {}", d.doc_id)));
                }
            }
        }
        if clusters.is_empty() {
            return Err(Error::InvalidArgument("store has no clusters".into()));
        }
        Ok(ClusterStore { clusters })
    }

    /// Groups `docs` by their cluster in `cs`. Documents outside `cs` (for
    /// instance in pruned clusters) are dropped; every assigned document must be
    /// present.
    pub fn from_documents(cs: &ClusterSet, docs: impl IntoIterator<Item = Document>) -> Result<Self> {
        let mut clusters = vec![Vec::new(); cs.len()];
        let mut found = 0usize;
        for d in docs {
            if let Some(c) = cs.cluster_of(&d.doc_id) {
                clusters[c].push(d);
                found += 1;
            }
        }
        let store = ClusterStore::new(clusters)?;
        if found != cs.assignments().len() {
            let present: HashSet<&str> = store.documents().map(|d| d.doc_id.as_str()).collect();
            let missing = cs
                .assignments()
                .keys()
                .find(|id| !present.contains(id.as_str()))
                .expect("some document is missing");
            return Err(Error::Data(format!(
                "document {missing} is assigned to a cluster but absent from the documents"
            )));
        }
        Ok(store)
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn cluster(&self, c: usize) -> &[Document] {
        &self.clusters[c]
    }

    pub fn documents(&self) -> impl Iterator<Item = &Document> {
        self.clusters.iter().flatten()
    }

    pub fn tokens_in(&self, c: usize) -> u64 {
        self.clusters[c].iter().map(|d| d.token_count).sum()
    }

    pub fn max_document_tokens(&self) -> u64 {
        self.documents().map(|d| d.token_count).max().unwrap_or(0)
    }

    /// File holding cluster `c` inside a store directory.
    pub fn cluster_file(dir: &Path, c: usize) -> PathBuf {
        dir.join(format!("cluster_{c:05}.jsonl"))
    }

    /// Writes one JSON-lines file per cluster into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
        for (c, docs) in self.clusters.iter().enumerate() {
            let path = Self::cluster_file(dir, c);
            write_jsonl(&path, docs.iter())?;
        }
        Ok(())
    }

    /// Reads `cluster_00000.jsonl`, `cluster_00001.jsonl`, ... until the first
    /// missing index.
    pub fn read_dir(dir: &Path) -> Result<Self> {
        if !dir.is_dir() {
            return Err(Error::file(
                dir,
                std::io::Error::new(std::io::ErrorKind::NotFound, "store directory not found"),
            ));
        }
        let mut clusters = Vec::new();
        loop {
            let path = Self::cluster_file(dir, clusters.len());
            if !path.exists() {
                break;
            }
            clusters.push(read_documents(&path)?);
        }
        if clusters.is_empty() {
            return Err(Error::Data(format!("{}: no cluster files", dir.display())));
        }
        ClusterStore::new(clusters)
    }
}

/// Reads a JSON-lines document file.
pub fn read_documents(path: &Path) -> Result<Vec<Document>> {
    let f = File::open(path).map_err(|e| Error::file(path, e))?;
    let mut docs = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::file(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let d: Document = serde_json::from_str(&line)
            .map_err(|e| Error::Data(format!("{}:{}: {e}", path.display(), i + 1)))?;
        docs.push(d);
    }
    Ok(docs)
}

pub fn write_jsonl<'a, T: Serialize + 'a>(path: &Path, items: impl Iterator<Item = &'a T>) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::file(path, e))?;
    let mut w = BufWriter::new(f);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePlan {
    pub weights: MixtureWeights,
    pub total_tokens: u64,
    pub seed: u64,
    #[serde(default)]
    pub with_replacement: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterManifest {
    pub cluster: usize,
    pub weight: f64,
    pub target_tokens: u64,
    pub realized_tokens: u64,
    pub documents: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleManifest {
    pub seed: u64,
    pub with_replacement: bool,
    pub weights: MixtureWeights,
    pub total_tokens: u64,
    pub realized_tokens: u64,
    pub clusters: Vec<ClusterManifest>,
}

impl SampleManifest {
    pub fn write_file(&self, path: &Path) -> Result<()> {
        let s = serde_json::to_string_pretty(self)? + "\n";
        fs::write(path, s).map_err(|e| Error::file(path, e))
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        let s = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Ok(serde_json::from_str(&s)?)
    }
}

/// A drawn document: its cluster and position within the cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pick {
    pub cluster: usize,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSample {
    pub picks: Vec<Pick>,
    pub manifest: SampleManifest,
}

#[derive(Serialize)]
struct OutputRecord<'a> {
    doc_id: &'a str,
    token_count: u64,
    cluster: usize,
    text: &'a str,
}

impl CorpusSample {
    pub fn documents<'s>(&'s self, store: &'s ClusterStore) -> impl Iterator<Item = &'s Document> {
        self.picks.iter().map(|p| &store.cluster(p.cluster)[p.index])
    }

    /// Writes the drawn documents as JSON lines, in draw order.
    pub fn write_jsonl(&self, store: &ClusterStore, path: &Path) -> Result<()> {
        let records: Vec<OutputRecord> = self
            .picks
            .iter()
            .map(|p| {
                let d = &store.cluster(p.cluster)[p.index];
                OutputRecord {
                    doc_id: &d.doc_id,
                    token_count: d.token_count,
                    cluster: p.cluster,
                    text: &d.text,
                }
            })
            .collect();
        write_jsonl(path, records.iter())
    }
}

/// Splits `total` across `weights` by largest remainder. Only clusters with
/// positive weight receive tokens; remainder ties go to the lower index.
pub fn apportion(weights: &MixtureWeights, total: u64) -> Vec<u64> {
    let quotas: Vec<f64> = weights.iter().map(|w| w * total as f64).collect();
    let mut targets: Vec<u64> = quotas.iter().map(|q| q.floor() as u64).collect();
    let assigned: u64 = targets.iter().sum();
    let mut order: Vec<usize> = (0..quotas.len()).filter(|&c| weights[c] > 0.0).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    if assigned <= total {
        let mut left = total - assigned;
        for &c in order.iter().cycle() {
            if left == 0 {
                break;
            }
            targets[c] += 1;
            left -= 1;
        }
    } else {
        // Rounding pushed the floors over the total; trim from the smallest remainders.
        let mut over = assigned - total;
        for &c in order.iter().rev().cycle() {
            if over == 0 {
                break;
            }
            if targets[c] > 0 {
                targets[c] -= 1;
                over -= 1;
            }
        }
    }
    targets
}

/// Draws documents so each cluster's share of the output tracks its weight.
///
/// Cluster targets come from [`apportion`]. Clusters are filled in index order
/// and documents are atomic, so a cluster may overshoot its target by part of
/// one document; that overshoot is carried into the next cluster's target. The
/// realized total therefore lands in `[total_tokens, total_tokens + max document)`.
/// Without replacement each cluster is walked in a seeded shuffle; with
/// replacement documents are drawn uniformly from a seeded stream.
pub fn sample_corpus(store: &ClusterStore, plan: &SamplePlan) -> Result<CorpusSample> {
    let k = store.len();
    if plan.weights.len() != k {
        return Err(Error::InvalidArgument(format!(
            "{} weights for a store of {k} clusters",
            plan.weights.len()
        )));
    }
    if plan.total_tokens == 0 {
        return Err(Error::InvalidArgument("total_tokens must be at least 1".into()));
    }
    let targets = apportion(&plan.weights, plan.total_tokens);

    let deficits: Vec<Deficit> = (0..k)
        .filter(|&c| targets[c] > 0)
        .filter_map(|c| {
            let available = store.tokens_in(c);
            let short = if plan.with_replacement {
                available == 0
            } else {
                available < targets[c]
            };
            short.then_some(Deficit {
                cluster: c,
                required: targets[c],
                available,
            })
        })
        .collect();
    if !deficits.is_empty() {
        return Err(Error::Shortfall(deficits));
    }

    let orders: Vec<Vec<usize>> = if plan.with_replacement {
        Vec::new()
    } else {
        par::map_range(k, |c| {
            if targets[c] == 0 {
                return Vec::new();
            }
            let mut idx: Vec<usize> = (0..store.cluster(c).len()).collect();
            idx.shuffle(&mut seed::stream_rng(plan.seed, c as u64));
            idx
        })
    };

    let mut picks = Vec::new();
    let mut clusters = Vec::with_capacity(k);
    // Tokens realized beyond the targets of the clusters filled so far.
    let mut carry: u64 = 0;
    for c in 0..k {
        let docs = store.cluster(c);
        let goal = targets[c].saturating_sub(carry);
        carry -= targets[c].min(carry);
        let mut realized = 0u64;
        let mut count = 0usize;
        if goal > 0 {
            if plan.with_replacement {
                let mut rng = seed::stream_rng(plan.seed, c as u64);
                while realized < goal {
                    let i = rng.random_range(0..docs.len());
                    realized += docs[i].token_count;
                    count += 1;
                    picks.push(Pick { cluster: c, index: i });
                }
            } else {
                for &i in &orders[c] {
                    if realized >= goal {
                        break;
                    }
                    realized += docs[i].token_count;
                    count += 1;
                    picks.push(Pick { cluster: c, index: i });
                }
            }
            carry += realized - goal;
        }
        clusters.push(ClusterManifest {
            cluster: c,
            weight: plan.weights[c],
            target_tokens: targets[c],
            realized_tokens: realized,
            documents: count,
        });
    }

    let realized_tokens = clusters.iter().map(|c| c.realized_tokens).sum();
    Ok(CorpusSample {
        picks,
        manifest: SampleManifest {
            seed: plan.seed,
            with_replacement: plan.with_replacement,
            weights: plan.weights.clone(),
            total_tokens: plan.total_tokens,
            realized_tokens,
            clusters,
        },
    })
}
