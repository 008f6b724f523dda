//! Iterative mixture search.
//!
//! Iteration 1 evaluates `budgets[0]` draws from the token-weighted Dirichlet
//! prior and fits a predictor. Each later iteration draws a fresh pool, drops
//! mixtures already evaluated, ranks the rest with the previous predictor, keeps
//! the Top-N and evaluates `budgets[k]` of them chosen uniformly at random. The
//! predictor is then refit on everything measured so far. With a single budget
//! the search reduces to one-shot regression-based mixing.
//!
//! All randomness is derived from the plan seed and the iteration number, so an
//! interrupted search resumed from its checkpoint replays exactly.

mod state;

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rand::seq::SliceRandom;

pub use state::{IterationRecord, SearchPlan, SearchResult, SearchState, STATE_FILE_VERSION};

use crate::cluster::ClusterSet;
use crate::eval::Evaluator;
use crate::predictor::{self, FittedPredictor};
use crate::sampler::{sample_range, DirichletPrior};
use crate::simplex::{ConfigSample, Direction, MixtureWeights};
use crate::{par, seed, Error, Result};

/// Per-entry tolerance under which two mixtures count as the same configuration.
pub const DUPLICATE_TOL: f64 = 1e-9;

/// Cap on stream draws per requested evaluation in iteration 1.
const MAX_DRAWS_PER_SLOT: usize = 1000;

/// Runs a full search over the clusters of `cs`.
pub fn run_search<E: Evaluator + ?Sized>(cs: &ClusterSet, plan: &SearchPlan, eval: &E) -> Result<SearchResult> {
    SearchDriver::new(cs.token_totals(), plan.clone())?.run(eval)
}

/// Continues the search checkpointed in `state_file` and keeps checkpointing there.
///
/// `plan` must match the stored plan except that its budget schedule may extend
/// it. A completed search is returned as stored without new evaluations.
pub fn resume<E: Evaluator + ?Sized>(state_file: &Path, plan: &SearchPlan, eval: &E) -> Result<SearchResult> {
    SearchDriver::from_checkpoint(state_file, plan.clone())?
        .check_evaluator(eval)?
        .run(eval)
}

/// Steps a search one iteration at a time, checkpointing after each.
#[derive(Debug)]
pub struct SearchDriver {
    state: SearchState,
    checkpoint: Option<PathBuf>,
}

impl SearchDriver {
    pub fn new(token_totals: &[u64], plan: SearchPlan) -> Result<Self> {
        plan.validate()?;
        if token_totals.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "search needs at least 2 clusters, got {}",
                token_totals.len()
            )));
        }
        DirichletPrior::from_token_totals(token_totals, plan.prior_scale)?;
        Ok(SearchDriver {
            state: SearchState {
                version: STATE_FILE_VERSION,
                plan,
                token_totals: token_totals.to_vec(),
                iteration: 0,
                evaluated: Vec::new(),
                predictors: Vec::new(),
                history: Vec::new(),
                result: None,
            },
            checkpoint: None,
        })
    }

    /// Loads a checkpoint and adopts `plan`, which may only extend the budgets.
    pub fn from_checkpoint(path: &Path, plan: SearchPlan) -> Result<Self> {
        plan.validate()?;
        let mut state = SearchState::read_file(path)?;
        if state.plan.objective.direction != plan.objective.direction {
            return Err(Error::IncompatibleState(format!(
                "checkpoint objective is {:?}, plan asks for {:?}",
                state.plan.objective.direction, plan.objective.direction
            )));
        }
        if !state.plan.same_except_budgets(&plan) {
            return Err(Error::IncompatibleState(
                "plan differs from the checkpointed plan beyond its budget schedule".into(),
            ));
        }
        let done = state.iteration;
        if plan.budgets.len() < done || plan.budgets[..done] != state.plan.budgets[..done] {
            return Err(Error::IncompatibleState(format!(
                "checkpoint completed budgets {:?}, plan schedules {:?}",
                &state.plan.budgets[..done],
                plan.budgets
            )));
        }
        if state.plan.budgets != plan.budgets {
            state.result = None;
            state.plan.budgets = plan.budgets;
        }
        Ok(SearchDriver {
            state,
            checkpoint: Some(path.to_path_buf()),
        })
    }

    /// Rejects an evaluator built for a different number of clusters.
    pub fn check_evaluator<E: Evaluator + ?Sized>(self, eval: &E) -> Result<Self> {
        if let Some(k) = eval.dimension() {
            if k != self.state.clusters() {
                return Err(Error::IncompatibleState(format!(
                    "checkpoint has {} clusters, evaluator expects {k}",
                    self.state.clusters()
                )));
            }
        }
        Ok(self)
    }

    pub fn with_checkpoint(mut self, path: impl Into<PathBuf>) -> Self {
        self.checkpoint = Some(path.into());
        self
    }

    pub fn state(&self) -> &SearchState {
        &self.state
    }

    pub fn into_state(self) -> SearchState {
        self.state
    }

    pub fn is_complete(&self) -> bool {
        self.state.iteration >= self.state.plan.iterations()
    }

    /// Runs to completion.
    pub fn run<E: Evaluator + ?Sized>(mut self, eval: &E) -> Result<SearchResult> {
        self.run_until(eval, None)?;
        Ok(self.state.result.clone().expect("search is complete"))
    }

    /// Runs until iteration `stop_after` has completed (or to the end). Returns
    /// the result once the whole schedule is done.
    pub fn run_until<E: Evaluator + ?Sized>(&mut self, eval: &E, stop_after: Option<usize>) -> Result<Option<SearchResult>> {
        let eval = self.check_dim(eval)?;
        if let Some(r) = &self.state.result {
            return Ok(Some(r.clone()));
        }
        while !self.is_complete() {
            if stop_after.is_some_and(|s| self.state.iteration >= s) {
                return Ok(None);
            }
            self.step(eval)?;
        }
        let result = self.finish()?;
        self.state.result = Some(result.clone());
        self.save()?;
        Ok(Some(result))
    }

    fn check_dim<'e, E: Evaluator + ?Sized>(&self, eval: &'e E) -> Result<&'e E> {
        match eval.dimension() {
            Some(k) if k != self.state.clusters() => Err(Error::InvalidArgument(format!(
                "evaluator expects {k} clusters, search has {}",
                self.state.clusters()
            ))),
            _ => Ok(eval),
        }
    }

    fn save(&self) -> Result<()> {
        if let Some(p) = &self.checkpoint {
            self.state.write_file(p)?;
        }
        Ok(())
    }

    fn prior(&self) -> Result<DirichletPrior> {
        let plan = &self.state.plan;
        let base = DirichletPrior::from_token_totals(&self.state.token_totals, plan.prior_scale)?;
        match (plan.recenter_prior, self.best_index()) {
            (Some(mix), Some(b)) if self.state.iteration >= 1 => {
                base.recentered(&self.state.evaluated[b].weights, mix)
            }
            _ => Ok(base),
        }
    }

    fn direction(&self) -> Direction {
        self.state.plan.objective.direction
    }

    /// Index of the best measured sample, earliest on ties.
    fn best_index(&self) -> Option<usize> {
        let dir = self.direction();
        let mut best: Option<usize> = None;
        for (i, s) in self.state.evaluated.iter().enumerate() {
            if best.is_none_or(|b| dir.better(s.performance, self.state.evaluated[b].performance)) {
                best = Some(i);
            }
        }
        best
    }

    fn is_evaluated(&self, w: &MixtureWeights, batch: &[MixtureWeights]) -> bool {
        self.state
            .evaluated
            .iter()
            .map(|s| &s.weights)
            .chain(batch)
            .any(|e| e.approx_eq(w, DUPLICATE_TOL))
    }

    /// Runs the next iteration and checkpoints.
    pub fn step<E: Evaluator + ?Sized>(&mut self, eval: &E) -> Result<()> {
        if self.is_complete() {
            return Ok(());
        }
        let k = self.state.iteration + 1;
        let plan = self.state.plan.clone();
        let budget = plan.budgets[k - 1];
        let prior = self.prior()?;

        let (pool_seed, pool_size, excluded, top_n, mut queue) = if k == 1 {
            let pool_seed = seed::derive(plan.seed, &[seed::TAG_INITIAL]);
            (pool_seed, 0, 0, Vec::new(), Queue::Stream { next: 0 })
        } else {
            let pool_seed = seed::derive(plan.seed, &[seed::TAG_POOL, k as u64]);
            let pool = sample_range(&prior, 0, plan.pool_size, plan.floor, pool_seed)?;
            let (kept, excluded) = self.exclude_known(pool);
            let predictor = self.state.predictors.last().expect("fitted after iteration 1");
            let weights: Vec<MixtureWeights> = kept.iter().map(|(_, w)| w.clone()).collect();
            let scores = predictor.predict_many(&weights)?;
            let dir = self.direction();
            let mut order: Vec<usize> = (0..kept.len()).collect();
            order.sort_by(|&a, &b| {
                dir.score(scores[b])
                    .total_cmp(&dir.score(scores[a]))
                    .then(a.cmp(&b))
            });
            let n = plan.top_n(k).min(order.len());
            let top: Vec<usize> = order[..n].to_vec();
            let mut shuffled = top.clone();
            shuffled.shuffle(&mut seed::rng(seed::derive(plan.seed, &[seed::TAG_PICK, k as u64])));
            let m = budget.min(shuffled.len());
            let mut first: Vec<usize> = shuffled[..m].to_vec();
            first.sort_unstable();
            // Replacements come from the rest of the Top-N, then the remaining ranking.
            let rest = shuffled[m..].iter().chain(&order[n..]).copied();
            let items: Vec<(usize, MixtureWeights)> = first
                .into_iter()
                .chain(rest)
                .map(|i| (kept[i].0, kept[i].1.clone()))
                .collect();
            (
                pool_seed,
                kept.len(),
                excluded,
                top.iter().map(|&i| kept[i].0).collect(),
                Queue::Ranked { items, next: 0 },
            )
        };

        let mut accepted: Vec<MixtureWeights> = Vec::new();
        let mut new_samples: Vec<ConfigSample> = Vec::new();
        let mut chosen: Vec<usize> = Vec::new();
        let mut failed = 0;
        let mut draws = 0usize;

        // Each failure earns one replacement draw, up to one per budget slot.
        while new_samples.len() < budget && failed < budget {
            let need = budget - new_samples.len();
            let mut batch: Vec<(usize, MixtureWeights)> = Vec::with_capacity(need);
            while batch.len() < need && draws < MAX_DRAWS_PER_SLOT * budget {
                let Some((idx, w)) = queue.next(&prior, &plan, pool_seed)? else { break };
                draws += 1;
                let duplicate = self.is_evaluated(&w, &accepted)
                    || batch.iter().any(|(_, p)| p.approx_eq(&w, DUPLICATE_TOL));
                if !duplicate {
                    batch.push((idx, w));
                }
            }
            if batch.is_empty() {
                break;
            }
            let outcomes = par::with_limit(plan.max_parallel_evals, || {
                par::map_slice(&batch, |(_, w)| evaluate_with_retry(eval, w))
            });
            for ((idx, w), outcome) in batch.into_iter().zip(outcomes) {
                match outcome {
                    Ok(v) => {
                        accepted.push(w.clone());
                        chosen.push(idx);
                        new_samples.push(ConfigSample::new(w, v, k)?);
                    }
                    Err(e) => {
                        failed += 1;
                        warn!("iteration {k}: candidate {idx} failed twice, drawing a replacement: {e}");
                    }
                }
            }
        }

        if new_samples.is_empty() {
            self.save()?;
            return Err(Error::SearchAborted {
                iteration: k,
                checkpoint: self.checkpoint.clone(),
            });
        }
        if new_samples.len() < budget {
            warn!(
                "iteration {k}: only {} of {budget} evaluations succeeded",
                new_samples.len()
            );
        }

        let iteration_best = new_samples
            .iter()
            .map(|s| s.performance)
            .reduce(|a, b| if self.direction().better(b, a) { b } else { a })
            .expect("non-empty");
        let evaluated = new_samples.len();
        self.state.evaluated.extend(new_samples);

        let predictor = self.fit_predictor(k)?;
        let best = self.best_index().expect("non-empty");
        let record = IterationRecord {
            iteration: k,
            budget,
            pool_seed,
            pool_size,
            excluded,
            top_n,
            chosen,
            evaluated,
            failed,
            iteration_best,
            best_so_far: self.state.evaluated[best].performance,
            best_weights: self.state.evaluated[best].weights.clone(),
            predictor_trees: predictor.trees_used,
        };
        info!(
            "iteration {k}: {evaluated} evaluated, best so far {:.6}",
            record.best_so_far
        );
        self.state.predictors.push(predictor);
        self.state.history.push(record);
        self.state.iteration = k;
        self.save()
    }

    /// Drops pool members equal to an evaluated mixture or to an earlier member.
    fn exclude_known(&self, pool: Vec<MixtureWeights>) -> (Vec<(usize, MixtureWeights)>, usize) {
        let known = par::map_slice(&pool, |w| self.is_evaluated(w, &[]));
        let mut seen: HashSet<Vec<u64>> = HashSet::new();
        let mut kept = Vec::with_capacity(pool.len());
        let total = pool.len();
        for (i, (w, known)) in pool.into_iter().zip(known).enumerate() {
            if known {
                continue;
            }
            let bits: Vec<u64> = w.iter().map(|x| x.to_bits()).collect();
            if seen.insert(bits) {
                kept.push((i, w));
            }
        }
        let excluded = total - kept.len();
        (kept, excluded)
    }

    fn fit_predictor(&self, k: usize) -> Result<FittedPredictor> {
        let plan = &self.state.plan;
        let cfg = predictor::GbdtConfig {
            seed: seed::derive(plan.seed, &[seed::TAG_PREDICTOR, k as u64]),
            ..plan.predictor.clone()
        };
        match predictor::fit(&self.state.evaluated, &cfg) {
            Err(Error::InsufficientData { needed, got }) => {
                warn!("iteration {k}: {got} samples (< {needed}); predictor falls back to the mean");
                let mean = self.state.evaluated.iter().map(|s| s.performance).sum::<f64>() / got as f64;
                Ok(FittedPredictor::constant(self.state.clusters(), mean, cfg))
            }
            other => other,
        }
    }

    fn finish(&self) -> Result<SearchResult> {
        let plan = &self.state.plan;
        let best = self
            .best_index()
            .ok_or_else(|| Error::EmptyResult("no evaluations recorded".into()))?;
        let predictor = self.state.predictors.last().expect("at least one iteration");
        let pool = sample_range(
            &self.prior()?,
            0,
            plan.pool_size,
            plan.floor,
            seed::derive(plan.seed, &[seed::TAG_FINAL]),
        )?;
        let idx = predictor
            .argbest(&pool, self.direction())?
            .expect("pool is non-empty");
        let best_predicted_value = predictor.predict(&pool[idx])?;
        Ok(SearchResult {
            best_mixture: self.state.evaluated[best].weights.clone(),
            best_measured: self.state.evaluated[best].performance,
            best_predicted_mixture: pool[idx].clone(),
            best_predicted_value,
            per_iteration_best: self.state.history.iter().map(|h| h.best_so_far).collect(),
            total_evaluations: self.state.evaluated.len(),
        })
    }
}

enum Queue {
    /// Iteration 1: consecutive draws from the prior stream.
    Stream { next: u64 },
    /// Later iterations: the chosen Top-N members, then replacements.
    Ranked {
        items: Vec<(usize, MixtureWeights)>,
        next: usize,
    },
}

impl Queue {
    fn next(&mut self, prior: &DirichletPrior, plan: &SearchPlan, pool_seed: u64) -> Result<Option<(usize, MixtureWeights)>> {
        match self {
            Queue::Stream { next } => {
                let i = *next;
                *next += 1;
                let w = prior.draw(pool_seed, i).sparsify(plan.floor)?;
                Ok(Some((i as usize, w)))
            }
            Queue::Ranked { items, next } => {
                let item = items.get(*next).cloned();
                *next += 1;
                Ok(item)
            }
        }
    }
}

fn evaluate_with_retry<E: Evaluator + ?Sized>(eval: &E, w: &MixtureWeights) -> Result<f64> {
    eval.evaluate(w).or_else(|e| {
        warn!("evaluation failed, retrying once: {e}");
        eval.evaluate(w)
    })
}
