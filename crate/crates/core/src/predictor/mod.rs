//! Boosted regression trees mapping mixture weights to predicted performance.
//!
//! Squared-error gradient boosting with exact greedy splits. Leaf values use
//! second-order steps with L1 soft-thresholding of the gradient sum and L2 damping
//! of the hessian sum. A seeded hold-out split drives early stopping and the
//! ensemble is truncated to the round with the lowest validation loss.

mod rank;
mod tree;

use std::fs;
use std::path::Path;

use log::warn;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use rank::{average_ranks, spearman};
pub use tree::{Node, Tree};
use tree::{build_tree, TreeParams};

use crate::simplex::{ConfigSample, Direction, MixtureWeights};
use crate::{par, seed, Error, Result};

/// Fewest samples `fit` accepts.
pub const MIN_FIT_SAMPLES: usize = 8;
pub const MODEL_FILE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GbdtConfig {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub l1_reg: f64,
    pub l2_reg: f64,
    pub learning_rate: f64,
    pub max_trees: usize,
    pub early_stop_rounds: usize,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for GbdtConfig {
    fn default() -> Self {
        GbdtConfig {
            max_depth: 4,
            min_samples_leaf: 5,
            l1_reg: 0.0,
            l2_reg: 1.0,
            learning_rate: 0.05,
            max_trees: 1000,
            early_stop_rounds: 20,
            validation_fraction: 0.2,
            seed: 0,
        }
    }
}

impl GbdtConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.max_depth < 1 {
            return bad("max_depth must be at least 1");
        }
        if self.min_samples_leaf < 1 {
            return bad("min_samples_leaf must be at least 1");
        }
        if self.max_trees < 1 {
            return bad("max_trees must be at least 1");
        }
        if self.early_stop_rounds < 1 {
            return bad("early_stop_rounds must be at least 1");
        }
        if !(self.l1_reg >= 0.0 && self.l2_reg >= 0.0) {
            return bad("regularization must be non-negative");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad("validation_fraction must lie in (0, 1)");
        }
        Ok(())
    }

    fn tree_params(&self) -> TreeParams {
        TreeParams {
            max_depth: self.max_depth,
            min_samples_leaf: self.min_samples_leaf,
            l1: self.l1_reg,
            l2: self.l2_reg,
        }
    }
}

/// A fitted ensemble. Immutable; `predict` is safe from any number of threads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedPredictor {
    pub version: u32,
    pub config: GbdtConfig,
    pub dim: usize,
    pub base_score: f64,
    pub trees_used: usize,
    /// Boosting rounds run before early stopping kicked in.
    pub rounds_fitted: usize,
    pub validation_loss: f64,
    /// Training MSE before the first round and after each kept round.
    pub train_loss: Vec<f64>,
    pub trees: Vec<Tree>,
}

impl FittedPredictor {
    /// A predictor with no trees that returns `base_score` everywhere.
    pub fn constant(dim: usize, base_score: f64, config: GbdtConfig) -> Self {
        FittedPredictor {
            version: MODEL_FILE_VERSION,
            config,
            dim,
            base_score,
            trees_used: 0,
            rounds_fitted: 0,
            validation_loss: 0.0,
            train_loss: vec![0.0],
            trees: Vec::new(),
        }
    }

    pub fn predict(&self, w: &MixtureWeights) -> Result<f64> {
        if w.len() != self.dim {
            return Err(Error::InvalidArgument(format!(
                "predictor expects {} weights, got {}",
                self.dim,
                w.len()
            )));
        }
        Ok(self.predict_raw(w.as_slice()))
    }

    pub(crate) fn predict_raw(&self, x: &[f64]) -> f64 {
        let lr = self.config.learning_rate;
        self.trees[..self.trees_used]
            .iter()
            .fold(self.base_score, |acc, t| acc + lr * t.predict(x))
    }

    /// Predictions for many mixtures, in input order.
    pub fn predict_many(&self, ws: &[MixtureWeights]) -> Result<Vec<f64>> {
        if let Some(w) = ws.iter().find(|w| w.len() != self.dim) {
            return Err(Error::InvalidArgument(format!(
                "predictor expects {} weights, got {}",
                self.dim,
                w.len()
            )));
        }
        Ok(par::map_slice(ws, |w| self.predict_raw(w.as_slice())))
    }

    /// Index of the best predicted mixture under `direction`, lowest index on ties.
    pub fn argbest(&self, ws: &[MixtureWeights], direction: Direction) -> Result<Option<usize>> {
        let preds = self.predict_many(ws)?;
        let mut best: Option<usize> = None;
        for (i, &p) in preds.iter().enumerate() {
            if best.is_none_or(|b| direction.better(p, preds[b])) {
                best = Some(i);
            }
        }
        Ok(best)
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        fs::write(path, s).map_err(|e| Error::file(path, e))
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        let s = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        let p: FittedPredictor = serde_json::from_str(&s)?;
        if p.version != MODEL_FILE_VERSION {
            return Err(Error::Data(format!("unsupported model version {}", p.version)));
        }
        if p.trees_used > p.trees.len() {
            return Err(Error::Data("trees_used exceeds stored trees".into()));
        }
        Ok(p)
    }
}

/// Fits a predictor on evaluated mixtures.
pub fn fit(samples: &[ConfigSample], cfg: &GbdtConfig) -> Result<FittedPredictor> {
    let rows: Vec<&[f64]> = samples.iter().map(|s| s.weights.as_slice()).collect();
    let targets: Vec<f64> = samples.iter().map(|s| s.performance).collect();
    fit_rows(&rows, &targets, cfg)
}

/// Fits on raw feature rows. All rows must share one length.
pub fn fit_rows(rows: &[&[f64]], targets: &[f64], cfg: &GbdtConfig) -> Result<FittedPredictor> {
    cfg.validate()?;
    let n = rows.len();
    if n < MIN_FIT_SAMPLES {
        return Err(Error::InsufficientData {
            needed: MIN_FIT_SAMPLES,
            got: n,
        });
    }
    if targets.len() != n {
        return Err(Error::InvalidArgument("rows and targets differ in length".into()));
    }
    let dim = rows[0].len();
    if rows.iter().any(|r| r.len() != dim) {
        return Err(Error::InvalidArgument("feature rows differ in length".into()));
    }
    if let Some(t) = targets.iter().find(|t| !t.is_finite()) {
        return Err(Error::InvalidArgument(format!("target {t} is not finite")));
    }
    if targets.iter().all(|&t| t == targets[0]) {
        warn!("all {n} targets equal {}; predictor is constant", targets[0]);
        return Ok(FittedPredictor::constant(dim, targets[0], cfg.clone()));
    }

    let (train, valid) = train_validation_split(n, cfg);
    let base = train.iter().map(|&i| targets[i]).sum::<f64>() / train.len() as f64;
    let mut pred = vec![base; n];
    let mse = |pred: &[f64], idx: &[usize]| {
        idx.iter().map(|&i| (pred[i] - targets[i]).powi(2)).sum::<f64>() / idx.len() as f64
    };

    let params = cfg.tree_params();
    let hess = vec![1.0; n];
    let mut grad = vec![0.0; n];
    let mut trees = Vec::new();
    let mut train_loss = vec![mse(&pred, &train)];
    let mut best_loss = mse(&pred, &valid);
    let mut best_round = 0;

    for round in 1..=cfg.max_trees {
        for &i in &train {
            grad[i] = pred[i] - targets[i];
        }
        let tree = build_tree(rows, &grad, &hess, train.clone(), &params);
        for (p, row) in pred.iter_mut().zip(rows) {
            *p += cfg.learning_rate * tree.predict(row);
        }
        trees.push(tree);
        train_loss.push(mse(&pred, &train));
        let v = mse(&pred, &valid);
        if v < best_loss {
            best_loss = v;
            best_round = round;
        }
        if round - best_round >= cfg.early_stop_rounds {
            break;
        }
    }

    let rounds_fitted = trees.len();
    trees.truncate(best_round);
    train_loss.truncate(best_round + 1);
    Ok(FittedPredictor {
        version: MODEL_FILE_VERSION,
        config: cfg.clone(),
        dim,
        base_score: base,
        trees_used: best_round,
        rounds_fitted,
        validation_loss: best_loss,
        train_loss,
        trees,
    })
}

/// The seeded train/validation split `fit` uses for `n` samples; both halves
/// come back in ascending order.
pub fn train_validation_split(n: usize, cfg: &GbdtConfig) -> (Vec<usize>, Vec<usize>) {
    let n_valid = ((n as f64 * cfg.validation_fraction).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(cfg.seed));
    let mut valid = order[..n_valid].to_vec();
    let mut train = order[n_valid..].to_vec();
    valid.sort_unstable();
    train.sort_unstable();
    (train, valid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::{sample_pool, DirichletPrior};

    fn samples_from(f: impl Fn(&MixtureWeights) -> f64, k: usize, n: usize, seed: u64) -> Vec<ConfigSample> {
        let prior = DirichletPrior::new(vec![1.0; k], k as f64).unwrap();
        sample_pool(&prior, n, 0.0, seed)
            .unwrap()
            .candidates
            .into_iter()
            .map(|w| {
                let y = f(&w);
                ConfigSample::new(w, y, 1).unwrap()
            })
            .collect()
    }

    #[test]
    fn constant_targets_give_constant_predictor() {
        let s = samples_from(|_| 0.7, 3, 20, 1);
        let p = fit(&s, &GbdtConfig::default()).unwrap();
        assert_eq!(p.trees_used, 0);
        for x in &s {
            assert_eq!(p.predict(&x.weights).unwrap(), 0.7);
        }
    }

    #[test]
    fn too_few_samples() {
        let s = samples_from(|w| w[0], 3, 7, 1);
        assert!(matches!(
            fit(&s, &GbdtConfig::default()),
            Err(Error::InsufficientData { needed: 8, got: 7 })
        ));
    }

    #[test]
    fn zero_tree_predictor_returns_base() {
        let p = FittedPredictor::constant(2, -1.5, GbdtConfig::default());
        assert_eq!(p.predict(&MixtureWeights::uniform(2).unwrap()).unwrap(), -1.5);
        assert!(p.predict(&MixtureWeights::uniform(3).unwrap()).is_err());
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let mut s = samples_from(|w| w[0], 3, 10, 1);
        s[4].weights = MixtureWeights::uniform(2).unwrap();
        assert!(matches!(fit(&s, &GbdtConfig::default()), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn config_guards() {
        let s = samples_from(|w| w[0], 3, 10, 1);
        for cfg in [
            GbdtConfig { max_depth: 0, ..Default::default() },
            GbdtConfig { min_samples_leaf: 0, ..Default::default() },
            GbdtConfig { max_trees: 0, ..Default::default() },
            GbdtConfig { early_stop_rounds: 0, ..Default::default() },
            GbdtConfig { validation_fraction: 1.0, ..Default::default() },
            GbdtConfig { l1_reg: -1.0, ..Default::default() },
        ] {
            assert!(fit(&s, &cfg).is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn structure_and_loss_invariants() {
        let s = samples_from(|w| (3.0 * w[0]).sin() + w[1] * w[2], 4, 120, 9);
        let cfg = GbdtConfig::default();
        let p = fit(&s, &cfg).unwrap();
        assert!(p.trees_used >= 1);
        assert!(p.trees_used <= cfg.max_trees);
        assert_eq!(p.trees.len(), p.trees_used);
        assert!(p.rounds_fitted <= p.trees_used + cfg.early_stop_rounds);
        for t in &p.trees {
            assert!(t.depth() <= cfg.max_depth);
            assert!(t.leaves().all(|(_, n)| n >= cfg.min_samples_leaf));
        }
        assert!(p.train_loss.windows(2).all(|w| w[1] <= w[0] + 1e-15), "{:?}", p.train_loss);

        let again = fit(&s, &cfg).unwrap();
        assert_eq!(again, p);
    }

    #[test]
    fn model_file_round_trip() {
        let s = samples_from(|w| w[0] - w[1], 3, 40, 2);
        let p = fit(&s, &GbdtConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        p.write_file(&path).unwrap();
        let back = FittedPredictor::read_file(&path).unwrap();
        assert_eq!(back, p);
        for x in &s {
            assert_eq!(back.predict(&x.weights).unwrap(), p.predict(&x.weights).unwrap());
        }
    }

    #[test]
    fn argbest_respects_direction() {
        let s = samples_from(|w| w[0], 2, 60, 3);
        let p = fit(&s, &GbdtConfig::default()).unwrap();
        let cands = vec![
            MixtureWeights::new(vec![0.05, 0.95]).unwrap(),
            MixtureWeights::new(vec![0.95, 0.05]).unwrap(),
        ];
        assert_eq!(p.argbest(&cands, Direction::Maximize).unwrap(), Some(1));
        assert_eq!(p.argbest(&cands, Direction::Minimize).unwrap(), Some(0));
    }
}
