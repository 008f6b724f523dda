//! Run configuration: defaults, then `MIXSEARCH_*` environment variables, then
//! the config file, then command-line flags.

use std::path::{Path, PathBuf};

use mixsearch::cluster::{Axis, DEFAULT_MAX_ITERS, DEFAULT_MERGE_DISTANCE, DEFAULT_PRUNE_THRESHOLD, DEFAULT_RESTARTS};
use mixsearch::search::SearchPlan;
use mixsearch::{Error, Result};
use serde::Deserialize;

/// Prefix of environment overrides. `MIXSEARCH_SEED=3` sets `seed`;
/// a double underscore descends into a section: `MIXSEARCH_CLUSTER__K=8`.
pub const ENV_PREFIX: &str = "MIXSEARCH_";

/// Variables under the prefix that are not configuration.
const ENV_RESERVED: &[&str] = &["MIXSEARCH_WEIGHTS_FILE", "MIXSEARCH_LOG"];

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; 0 means every available core.
    pub threads: usize,
    pub out: PathBuf,
    pub paths: Paths,
    pub cluster: ClusterSection,
    pub prune: PruneSection,
    pub merge: MergeSection,
    pub search: SearchPlan,
    pub evaluator: EvaluatorSection,
    pub sample: SampleSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            threads: 0,
            out: PathBuf::from("mixsearch-out"),
            paths: Paths::default(),
            cluster: ClusterSection::default(),
            prune: PruneSection::default(),
            merge: MergeSection::default(),
            search: SearchPlan::default(),
            evaluator: EvaluatorSection::default(),
            sample: SampleSection::default(),
        }
    }
}

/// Inputs. Unset stage outputs default to files inside `out`.
#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub embeddings: Option<PathBuf>,
    /// Defaults to the embeddings path with a `.tsv` extension.
    pub sidecar: Option<PathBuf>,
    pub scores: Option<PathBuf>,
    /// JSON-lines documents, grouped into clusters through the cluster file.
    pub documents: Option<PathBuf>,
    /// Directory of per-cluster JSON-lines files; used instead of `documents`.
    pub store: Option<PathBuf>,
    pub clusters: Option<PathBuf>,
    pub merged: Option<PathBuf>,
    pub result: Option<PathBuf>,
    pub history: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ClusterSection {
    pub k: Option<usize>,
    pub normalize: bool,
    pub max_iters: usize,
    pub restarts: usize,
}

impl Default for ClusterSection {
    fn default() -> Self {
        ClusterSection {
            k: None,
            normalize: true,
            max_iters: DEFAULT_MAX_ITERS,
            restarts: DEFAULT_RESTARTS,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct PruneSection {
    pub threshold: f64,
    pub axes: Vec<String>,
}

impl Default for PruneSection {
    fn default() -> Self {
        PruneSection {
            threshold: DEFAULT_PRUNE_THRESHOLD,
            axes: Axis::ALL.iter().map(|a| a.name().to_string()).collect(),
        }
    }
}

impl PruneSection {
    pub fn parsed_axes(&self) -> Result<Vec<Axis>> {
        if self.axes.is_empty() {
            return Err(Error::InvalidArgument("prune.axes is empty".into()));
        }
        self.axes.iter().map(|a| a.parse()).collect()
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct MergeSection {
    pub distance: f64,
}

impl Default for MergeSection {
    fn default() -> Self {
        MergeSection {
            distance: DEFAULT_MERGE_DISTANCE,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "snake_case")]
pub enum EvaluatorKind {
    #[default]
    Synthetic,
    External,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "snake_case")]
pub enum OracleChoice {
    Linear,
    #[default]
    QuadraticBowl,
    RuggedMultimodal,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluatorSection {
    pub kind: EvaluatorKind,
    pub oracle: OracleChoice,
    /// Planted optimum for linear and bowl oracles; drawn from the seed when unset.
    pub optimum: Option<Vec<f64>>,
    pub bumps: usize,
    pub noise_sd: f64,
    /// Oracle seed; defaults to the run seed.
    pub seed: Option<u64>,
    pub command: Option<String>,
    pub timeout_secs: f64,
    pub deterministic: bool,
    pub workdir: Option<PathBuf>,
    /// Memoize evaluations in this file.
    pub cache: Option<PathBuf>,
}

impl Default for EvaluatorSection {
    fn default() -> Self {
        EvaluatorSection {
            kind: EvaluatorKind::Synthetic,
            oracle: OracleChoice::QuadraticBowl,
            optimum: None,
            bumps: 4,
            noise_sd: 0.0,
            seed: None,
            command: None,
            timeout_secs: 3600.0,
            deterministic: false,
            workdir: None,
            cache: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "snake_case")]
pub enum WeightSource {
    #[default]
    BestMeasured,
    BestPredicted,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SampleSection {
    pub total_tokens: u64,
    pub with_replacement: bool,
    /// Which mixture of the search result to materialize.
    pub source: WeightSource,
    /// Explicit weights; take precedence over the search result.
    pub weights: Option<Vec<f64>>,
}

impl Default for SampleSection {
    fn default() -> Self {
        SampleSection {
            total_tokens: 100_000,
            with_replacement: false,
            source: WeightSource::BestMeasured,
            weights: None,
        }
    }
}

/// Turns `MIXSEARCH_*` variables into a TOML table. Values are parsed as TOML
/// (numbers, booleans, arrays) and fall back to plain strings.
pub fn env_table(vars: impl IntoIterator<Item = (String, String)>) -> Result<toml::Table> {
    let mut root = toml::Table::new();
    for (key, value) in vars {
        let Some(rest) = key.strip_prefix(ENV_PREFIX) else { continue };
        if ENV_RESERVED.contains(&key.as_str()) || rest == "CONFIG" {
            continue;
        }
        let path: Vec<String> = rest.split("__").map(|p| p.to_lowercase()).collect();
        if path.iter().any(|p| p.is_empty()) {
            return Err(Error::InvalidArgument(format!("malformed environment override {key}")));
        }
        let parsed = format!("v = {value}")
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(value.clone()));
        let (last, parents) = path.split_last().expect("non-empty");
        let mut table = &mut root;
        for p in parents {
            let entry = table
                .entry(p.clone())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            table = entry.as_table_mut().ok_or_else(|| {
                Error::InvalidArgument(format!("environment override {key} conflicts with another"))
            })?;
        }
        table.insert(last.clone(), parsed);
    }
    Ok(root)
}

/// Recursively overlays `top` onto `base`.
fn merge_tables(base: &mut toml::Table, top: toml::Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) => merge_tables(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Builds the configuration from environment variables and an optional file.
/// Relative input paths in the file resolve against the file's directory; `out`
/// stays relative to the working directory.
pub fn load(file: Option<&Path>, vars: impl IntoIterator<Item = (String, String)>) -> Result<RunConfig> {
    let mut table = env_table(vars)?;
    let mut base_dir = None;
    if let Some(path) = file {
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        let from_file: toml::Table = text
            .parse()
            .map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))?;
        merge_tables(&mut table, from_file);
        base_dir = path.parent().map(Path::to_path_buf);
    }
    let mut cfg: RunConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| Error::InvalidArgument(format!("configuration: {e}")))?;
    if let Some(dir) = base_dir.filter(|d| !d.as_os_str().is_empty()) {
        cfg.resolve_relative(&dir);
    }
    Ok(cfg)
}

impl RunConfig {
    fn resolve_relative(&mut self, dir: &Path) {
        let fix_opt = |p: &mut Option<PathBuf>| {
            if let Some(p) = p {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        };
        let p = &mut self.paths;
        for slot in [
            &mut p.embeddings,
            &mut p.sidecar,
            &mut p.scores,
            &mut p.documents,
            &mut p.store,
            &mut p.clusters,
            &mut p.merged,
            &mut p.result,
            &mut p.history,
        ] {
            fix_opt(slot);
        }
        fix_opt(&mut self.evaluator.cache);
        fix_opt(&mut self.evaluator.workdir);
    }

    pub fn clusters_path(&self) -> PathBuf {
        self.paths.clusters.clone().unwrap_or_else(|| self.out.join("clusters.json"))
    }

    pub fn merged_path(&self) -> PathBuf {
        self.paths.merged.clone().unwrap_or_else(|| self.out.join("clusters_merged.json"))
    }

    pub fn result_path(&self) -> PathBuf {
        self.paths.result.clone().unwrap_or_else(|| self.out.join("search_result.json"))
    }

    pub fn state_path(&self) -> PathBuf {
        self.out.join("search_state.json")
    }

    pub fn history_path(&self) -> PathBuf {
        self.paths.history.clone().unwrap_or_else(|| self.out.join("history.json"))
    }

    pub fn sidecar_path(&self) -> Option<PathBuf> {
        self.paths
            .sidecar
            .clone()
            .or_else(|| self.paths.embeddings.as_ref().map(|e| e.with_extension("tsv")))
    }
}
