mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Cluster a corpus, search data mixtures over the clusters, and sample a corpus
/// from the chosen mixture.
#[derive(Debug, Parser)]
#[command(name = "mixsearch", version)]
pub struct Cli {
    #[command(flatten)]
    pub shared: Shared,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Shared {
    /// TOML run configuration. Also read from MIXSEARCH_CONFIG.
    #[arg(long, global = true, env = "MIXSEARCH_CONFIG")]
    pub config: Option<PathBuf>,
    /// Base seed for clustering, search and sampling
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run k-means over the document embeddings.
    Cluster {
        #[arg(long)]
        k: Option<usize>,
        /// Embedding matrix file.
        #[arg(long)]
        embeddings: Option<PathBuf>,
        /// Per-document quality scores, stored as cluster means when given.
        #[arg(long)]
        scores: Option<PathBuf>,
    },
    /// Drop low-quality clusters, then merge clusters with nearby centroids.
    PruneMerge {
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        distance: Option<f64>,
        /// Comma-separated quality axes to average.
        #[arg(long, value_delimiter = ',')]
        axes: Option<Vec<String>>,
        /// Cluster set to prune (default: clusters.json in the output directory)
        #[arg(long)]
        clusters: Option<PathBuf>,
        #[arg(long)]
        scores: Option<PathBuf>,
    },
    /// Iterative mixture search over the merged clusters.
    Search {
        /// Evaluations per iteration, e.g. 64,32,16.
        #[arg(long, value_delimiter = ',')]
        budgets: Option<Vec<usize>>,
        /// Continue from the checkpoint in the output directory.
        #[arg(long)]
        resume: bool,
        /// Write the final predictor to this file.
        #[arg(long)]
        save_predictor: Option<PathBuf>,
        /// Stop (with a checkpoint) once this many iterations have completed.
        #[arg(long)]
        stop_after: Option<usize>,
        /// Cluster set to search over (default: clusters_merged.json in the output directory)
        #[arg(long)]
        clusters: Option<PathBuf>,
    },
    /// Draw a token-budgeted document sample at the chosen mixture.
    Sample {
        #[arg(long)]
        total_tokens: Option<u64>,
        #[arg(long)]
        with_replacement: bool,
        /// Explicit comma-separated weights instead of the search result.
        #[arg(long, value_delimiter = ',')]
        weights: Option<Vec<f64>>,
    },
    /// Write CSV tables and an SVG heatmap of the weights across iterations.
    Report {
        /// History or checkpoint file; defaults to the history in the output directory.
        history: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MIXSEARCH_LOG", "info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            if e.is_input_error() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
