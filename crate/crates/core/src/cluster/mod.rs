//! Embedding ingestion, k-means, quality pruning and centroid merging.

mod embedding;
pub mod kmeans;
mod merge;
mod prune;
pub mod quality;
mod set;

pub use embedding::{EmbeddingMatrix, EMBEDDING_MAGIC, EMBEDDING_VERSION};
pub use kmeans::{kmeans_fit_restarts, restart_seed, DEFAULT_RESTARTS, kmeans_fit, kmeans_pp_init, lloyd_from, KMeansFit, DEFAULT_MAX_ITERS};
pub use merge::{merge_clusters, DEFAULT_MERGE_DISTANCE};
pub use prune::{cluster_mean_scores, cluster_quality, prune_clusters, DEFAULT_PRUNE_THRESHOLD};
pub use quality::{Axis, AxisScores, QualityScores};
pub use set::ClusterSet;
