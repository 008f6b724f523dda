use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::predictor::{FittedPredictor, GbdtConfig};
use crate::sampler::{DEFAULT_FLOOR, DEFAULT_POOL_SIZE, DEFAULT_SCALE};
use crate::simplex::{ConfigSample, MixtureWeights, SearchObjective};
use crate::{Error, Result};

pub const STATE_FILE_VERSION: u32 = 1;

/// Budget schedule and knobs for one search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchPlan {
    /// Evaluations per iteration; its length is the number of iterations.
    pub budgets: Vec<usize>,
    /// Candidates drawn and ranked by the predictor in iterations after the first.
    pub pool_size: usize,
    /// Top-N size as a multiple of the iteration's budget.
    pub top_n_factor: f64,
    pub objective: SearchObjective,
    pub seed: u64,
    /// Sparsity floor applied to every draw.
    pub floor: f64,
    /// Dirichlet scale over token proportions.
    pub prior_scale: f64,
    /// When set, later iterations draw from a prior moved this far toward the
    /// best mixture measured so far.
    pub recenter_prior: Option<f64>,
    /// Upper bound on concurrent evaluator calls.
    pub max_parallel_evals: usize,
    pub predictor: GbdtConfig,
}

impl Default for SearchPlan {
    fn default() -> Self {
        SearchPlan {
            budgets: vec![64, 32, 16],
            pool_size: DEFAULT_POOL_SIZE,
            top_n_factor: 2.0,
            objective: SearchObjective::maximize(""),
            seed: 0,
            floor: DEFAULT_FLOOR,
            prior_scale: DEFAULT_SCALE,
            recenter_prior: None,
            max_parallel_evals: 4,
            predictor: GbdtConfig::default(),
        }
    }
}

impl SearchPlan {
    pub fn with_budgets(budgets: Vec<usize>) -> Self {
        SearchPlan {
            budgets,
            ..Default::default()
        }
    }

    pub fn iterations(&self) -> usize {
        self.budgets.len()
    }

    pub fn total_budget(&self) -> usize {
        self.budgets.iter().sum()
    }

    /// Top-N size for iteration `k` (1-based).
    pub fn top_n(&self, k: usize) -> usize {
        (self.top_n_factor * self.budgets[k - 1] as f64).ceil() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.budgets.is_empty() {
            return bad("budget schedule is empty".into());
        }
        if self.budgets.contains(&0) {
            return bad(format!("every budget must be at least 1: {:?}", self.budgets));
        }
        if self.pool_size == 0 {
            return bad("pool_size must be at least 1".into());
        }
        if !(self.top_n_factor >= 1.0 && self.top_n_factor.is_finite()) {
            return bad(format!("top_n_factor {} must be at least 1", self.top_n_factor));
        }
        if !(0.0..1.0).contains(&self.floor) {
            return bad(format!("floor {} outside [0, 1)", self.floor));
        }
        if !(self.prior_scale > 0.0 && self.prior_scale.is_finite()) {
            return bad(format!("prior_scale {} must be positive", self.prior_scale));
        }
        if let Some(m) = self.recenter_prior {
            if !(0.0..=1.0).contains(&m) {
                return bad(format!("recenter_prior {m} outside [0, 1]"));
            }
        }
        if self.max_parallel_evals == 0 {
            return bad("max_parallel_evals must be at least 1".into());
        }
        self.predictor.validate()
    }

    /// True when the plans agree on everything but the budget schedule.
    pub(crate) fn same_except_budgets(&self, other: &SearchPlan) -> bool {
        let strip = |p: &SearchPlan| SearchPlan {
            budgets: Vec::new(),
            ..p.clone()
        };
        strip(self) == strip(other)
    }
}

/// What happened in one iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub budget: usize,
    pub pool_seed: u64,
    /// Candidates ranked after dropping already-evaluated mixtures (0 in iteration 1).
    pub pool_size: usize,
    pub excluded: usize,
    /// Pool indices of the Top-N, best first.
    pub top_n: Vec<usize>,
    /// Pool indices (or stream indices in iteration 1) evaluated, in evaluation order.
    pub chosen: Vec<usize>,
    pub evaluated: usize,
    pub failed: usize,
    pub iteration_best: f64,
    pub best_so_far: f64,
    pub best_weights: MixtureWeights,
    pub predictor_trees: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub best_mixture: MixtureWeights,
    pub best_measured: f64,
    pub best_predicted_mixture: MixtureWeights,
    pub best_predicted_value: f64,
    pub per_iteration_best: Vec<f64>,
    pub total_evaluations: usize,
}

impl SearchResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        write_atomic(path, &(self.to_json()? + "\n"))
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        let s = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Ok(serde_json::from_str(&s)?)
    }
}

/// Everything needed to continue a search: written after every iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchState {
    pub version: u32,
    pub plan: SearchPlan,
    pub token_totals: Vec<u64>,
    /// Completed iterations.
    pub iteration: usize,
    pub evaluated: Vec<ConfigSample>,
    pub predictors: Vec<FittedPredictor>,
    pub history: Vec<IterationRecord>,
    pub result: Option<SearchResult>,
}

impl SearchState {
    pub fn clusters(&self) -> usize {
        self.token_totals.len()
    }

    pub fn is_complete(&self) -> bool {
        self.result.is_some()
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        write_atomic(path, &(serde_json::to_string(self)? + "\n"))
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        let s = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        let state: SearchState = serde_json::from_str(&s)
            .map_err(|e| Error::IncompatibleState(format!("{}: {e}", path.display())))?;
        if state.version != STATE_FILE_VERSION {
            return Err(Error::IncompatibleState(format!(
                "unsupported state version {}",
                state.version
            )));
        }
        Ok(state)
    }
}

/// Writes through a temporary file in the same directory, then renames.
pub(crate) fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::file(dir, e))?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::file(path, e.error))?;
    Ok(())
}
