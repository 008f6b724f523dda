use std::fs;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::quality::AxisScores;
use crate::{Error, Result};

pub const CLUSTER_FILE_VERSION: u32 = 1;

/// A partition of documents into clusters with per-cluster summaries.
///
/// `lineage[c]` lists the indices of the original k-means clusters folded into
/// cluster `c`. `mean_scores` is filled in once quality scores have been attached
/// by pruning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ClusterSetFile", into = "ClusterSetFile")]
pub struct ClusterSet {
    dim: usize,
    centroids: Vec<Vec<f64>>,
    assignments: IndexMap<String, usize>,
    token_totals: Vec<u64>,
    doc_counts: Vec<usize>,
    mean_scores: Option<Vec<AxisScores>>,
    lineage: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClusterSetFile {
    version: u32,
    dim: usize,
    centroids: Vec<Vec<f64>>,
    token_totals: Vec<u64>,
    doc_counts: Vec<usize>,
    #[serde(default)]
    mean_scores: Option<Vec<AxisScores>>,
    lineage: Vec<Vec<usize>>,
    assignments: IndexMap<String, usize>,
}

impl TryFrom<ClusterSetFile> for ClusterSet {
    type Error = Error;

    fn try_from(f: ClusterSetFile) -> Result<Self> {
        if f.version != CLUSTER_FILE_VERSION {
            return Err(Error::Data(format!(
                "unsupported cluster file version {}",
                f.version
            )));
        }
        let cs = ClusterSet {
            dim: f.dim,
            centroids: f.centroids,
            assignments: f.assignments,
            token_totals: f.token_totals,
            doc_counts: f.doc_counts,
            mean_scores: f.mean_scores,
            lineage: f.lineage,
        };
        cs.validate()?;
        Ok(cs)
    }
}

impl From<ClusterSet> for ClusterSetFile {
    fn from(cs: ClusterSet) -> Self {
        ClusterSetFile {
            version: CLUSTER_FILE_VERSION,
            dim: cs.dim,
            centroids: cs.centroids,
            token_totals: cs.token_totals,
            doc_counts: cs.doc_counts,
            mean_scores: cs.mean_scores,
            lineage: cs.lineage,
            assignments: cs.assignments,
        }
    }
}

impl ClusterSet {
    /// Builds a cluster set from document assignments, recomputing the per-cluster
    /// token totals and document counts.
    pub fn from_assignments(
        centroids: Vec<Vec<f64>>,
        assignments: IndexMap<String, usize>,
        doc_tokens: &IndexMap<String, u64>,
        mean_scores: Option<Vec<AxisScores>>,
        lineage: Vec<Vec<usize>>,
    ) -> Result<Self> {
        let k = centroids.len();
        let mut token_totals = vec![0u64; k];
        let mut doc_counts = vec![0usize; k];
        for (id, &c) in &assignments {
            if c >= k {
                return Err(Error::Data(format!("document {id} assigned to missing cluster {c}")));
            }
            let t = doc_tokens
                .get(id)
                .ok_or_else(|| Error::Data(format!("no token count for document {id}")))?;
            token_totals[c] += t;
            doc_counts[c] += 1;
        }
        let cs = ClusterSet {
            dim: centroids.first().map_or(0, Vec::len),
            centroids,
            assignments,
            token_totals,
            doc_counts,
            mean_scores,
            lineage,
        };
        cs.validate()?;
        Ok(cs)
    }

    /// Attaches per-cluster mean quality scores.
    pub fn with_mean_scores(mut self, means: Vec<AxisScores>) -> Result<Self> {
        if means.len() != self.len() {
            return Err(Error::Data(format!(
                "{} score rows for {} clusters",
                means.len(),
                self.len()
            )));
        }
        self.mean_scores = Some(means);
        self.validate()?;
        Ok(self)
    }

    pub(crate) fn from_parts_unchecked(
        dim: usize,
        centroids: Vec<Vec<f64>>,
        assignments: IndexMap<String, usize>,
        token_totals: Vec<u64>,
        doc_counts: Vec<usize>,
        mean_scores: Option<Vec<AxisScores>>,
        lineage: Vec<Vec<usize>>,
    ) -> Self {
        ClusterSet {
            dim,
            centroids,
            assignments,
            token_totals,
            doc_counts,
            mean_scores,
            lineage,
        }
    }

    /// A placeholder partition with one synthetic document per cluster, for
    /// driving a search when only per-cluster token totals are known.
    pub fn from_token_totals(token_totals: &[u64]) -> Result<Self> {
        let k = token_totals.len();
        let centroids = (0..k)
            .map(|c| {
                let mut v = vec![0.0; k];
                v[c] = 1.0;
                v
            })
            .collect();
        let assignments = (0..k).map(|c| (format!("cluster-{c}"), c)).collect();
        let cs = ClusterSet {
            dim: k,
            centroids,
            assignments,
            token_totals: token_totals.to_vec(),
            doc_counts: vec![1; k],
            mean_scores: None,
            lineage: (0..k).map(|c| vec![c]).collect(),
        };
        cs.validate()?;
        Ok(cs)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.centroids.len();
        if k == 0 {
            return Err(Error::Data("cluster set is empty".into()));
        }
        if self.dim == 0 || self.centroids.iter().any(|c| c.len() != self.dim) {
            return Err(Error::Data("centroid dimensions disagree".into()));
        }
        if self.centroids.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Data("centroid has a non-finite coordinate".into()));
        }
        if self.token_totals.len() != k || self.doc_counts.len() != k || self.lineage.len() != k {
            return Err(Error::Data("per-cluster summaries disagree in length".into()));
        }
        if let Some(ms) = &self.mean_scores {
            if ms.len() != k {
                return Err(Error::Data("mean score table has the wrong length".into()));
            }
        }
        let mut counts = vec![0usize; k];
        for (id, &c) in &self.assignments {
            if c >= k {
                return Err(Error::Data(format!("document {id} assigned to missing cluster {c}")));
            }
            counts[c] += 1;
        }
        if counts != self.doc_counts {
            return Err(Error::Data("document counts do not match assignments".into()));
        }
        if let Some(c) = self.token_totals.iter().position(|&t| t == 0) {
            return Err(Error::Data(format!("cluster {c} holds no tokens")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.centroids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centroids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn centroids(&self) -> &[Vec<f64>] {
        &self.centroids
    }

    pub fn assignments(&self) -> &IndexMap<String, usize> {
        &self.assignments
    }

    pub fn cluster_of(&self, doc_id: &str) -> Option<usize> {
        self.assignments.get(doc_id).copied()
    }

    pub fn token_totals(&self) -> &[u64] {
        &self.token_totals
    }

    pub fn total_tokens(&self) -> u64 {
        self.token_totals.iter().sum()
    }

    pub fn doc_counts(&self) -> &[usize] {
        &self.doc_counts
    }

    pub fn mean_scores(&self) -> Option<&[AxisScores]> {
        self.mean_scores.as_deref()
    }

    pub fn lineage(&self) -> &[Vec<usize>] {
        &self.lineage
    }

    /// Documents of cluster `c` in assignment order.
    pub fn members(&self, c: usize) -> impl Iterator<Item = &str> {
        self.assignments
            .iter()
            .filter(move |(_, &a)| a == c)
            .map(|(id, _)| id.as_str())
    }

    /// Within-cluster sum of squared distances for the given embeddings.
    pub fn sse(&self, emb: &super::EmbeddingMatrix) -> f64 {
        emb.doc_ids()
            .iter()
            .enumerate()
            .filter_map(|(i, id)| self.cluster_of(id).map(|c| (i, c)))
            .map(|(i, c)| super::kmeans::squared_distance(emb.row(i), &self.centroids[c]))
            .sum()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        let mut s = self.to_json()?;
        s.push('\n');
        fs::write(path, s).map_err(|e| Error::file(path, e))
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        let s = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        serde_json::from_str(&s).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_round_trip_is_exact() {
        let cs = ClusterSet::from_token_totals(&[10, 20, 30]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        cs.write_file(&p).unwrap();
        assert_eq!(ClusterSet::read_file(&p).unwrap(), cs);
    }

    #[test]
    fn rejects_inconsistent_file() {
        let cs = ClusterSet::from_token_totals(&[10, 20]).unwrap();
        let json = cs.to_json().unwrap().replace("\"cluster-1\": 1", "\"cluster-1\": 0");
        assert!(serde_json::from_str::<ClusterSet>(&json).is_err());
    }

    #[test]
    fn zero_token_cluster_invalid() {
        assert!(ClusterSet::from_token_totals(&[10, 0]).is_err());
    }
}
