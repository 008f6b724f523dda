use std::path::{Path, PathBuf};
use std::time::Duration;

use log::{info, warn};
use mixsearch::cluster::{
    cluster_mean_scores, kmeans_fit_restarts, merge_clusters, prune_clusters, ClusterSet, EmbeddingMatrix,
    QualityScores,
};
use mixsearch::corpus::{read_documents, sample_corpus, ClusterStore, SamplePlan};
use mixsearch::eval::{Cached, Evaluator, ExternalCommand, SyntheticOracle};
use mixsearch::sampler::DirichletPrior;
use mixsearch::search::{SearchDriver, SearchResult};
use mixsearch::{par, report, Error, MixtureWeights, Result};

use crate::config::{self, EvaluatorKind, OracleChoice, RunConfig, WeightSource};
use crate::{Cli, Command};

pub const SAMPLE_FILE: &str = "sample.jsonl";
pub const MANIFEST_FILE: &str = "sample_manifest.json";

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = config::load(cli.shared.config.as_deref(), std::env::vars())?;
    if let Some(s) = cli.shared.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.shared.threads {
        cfg.threads = t;
    }
    if let Some(o) = cli.shared.out {
        cfg.out = o;
    }
    if cfg.threads > 0 {
        par::init_global_threads(cfg.threads);
    }
    match cli.command {
        Command::Cluster { k, embeddings, scores } => {
            cfg.cluster.k = k.or(cfg.cluster.k);
            cfg.paths.embeddings = embeddings.or(cfg.paths.embeddings);
            cfg.paths.scores = scores.or(cfg.paths.scores);
            cluster(&cfg)
        }
        Command::PruneMerge {
            threshold,
            distance,
            axes,
            clusters,
            scores,
        } => {
            cfg.prune.threshold = threshold.unwrap_or(cfg.prune.threshold);
            cfg.merge.distance = distance.unwrap_or(cfg.merge.distance);
            cfg.prune.axes = axes.unwrap_or(cfg.prune.axes);
            cfg.paths.clusters = clusters.or(cfg.paths.clusters);
            cfg.paths.scores = scores.or(cfg.paths.scores);
            prune_merge(&cfg)
        }
        Command::Search {
            budgets,
            resume,
            save_predictor,
            stop_after,
            clusters,
        } => {
            cfg.search.budgets = budgets.unwrap_or(cfg.search.budgets);
            cfg.paths.merged = clusters.or(cfg.paths.merged);
            search(&cfg, resume, save_predictor.as_deref(), stop_after)
        }
        Command::Sample {
            total_tokens,
            with_replacement,
            weights,
        } => {
            cfg.sample.total_tokens = total_tokens.unwrap_or(cfg.sample.total_tokens);
            cfg.sample.with_replacement |= with_replacement;
            cfg.sample.weights = weights.or(cfg.sample.weights);
            sample(&cfg)
        }
        Command::Report { history } => {
            cfg.paths.history = history.or(cfg.paths.history);
            report_cmd(&cfg)
        }
    }
}

fn require(path: Option<&PathBuf>, what: &str) -> Result<PathBuf> {
    let p = path.ok_or_else(|| Error::InvalidArgument(format!("{what} path is not set")))?;
    if !p.is_file() {
        return Err(Error::InvalidArgument(format!("{what} file {} does not exist", p.display())));
    }
    Ok(p.clone())
}

fn create_out(cfg: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(&cfg.out).map_err(|e| Error::InvalidArgument(format!("{}: {e}", cfg.out.display())))
}

fn cluster(cfg: &RunConfig) -> Result<()> {
    let k = cfg
        .cluster
        .k
        .ok_or_else(|| Error::InvalidArgument("cluster.k is not set".into()))?;
    let emb_path = require(cfg.paths.embeddings.as_ref(), "embeddings")?;
    let sidecar = require(cfg.sidecar_path().as_ref(), "embedding sidecar")?;
    let scores_path = cfg
        .paths
        .scores
        .as_ref()
        .map(|p| require(Some(p), "scores"))
        .transpose()?;
    if cfg.cluster.max_iters == 0 || cfg.cluster.restarts == 0 {
        return Err(Error::InvalidArgument("cluster.max_iters and cluster.restarts must be positive".into()));
    }

    let raw = EmbeddingMatrix::read_files(&emb_path, &sidecar)?;
    if k == 0 || k > raw.len() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} must be between 1 and the number of documents ({})",
            raw.len()
        )));
    }
    let scores = scores_path.as_deref().map(QualityScores::read_file).transpose()?;
    if let Some(s) = &scores {
        s.check_covers(&raw)?;
    }
    let emb = if cfg.cluster.normalize { raw.l2_normalize()? } else { raw };
    let fit = kmeans_fit_restarts(&emb, k, cfg.seed, cfg.cluster.max_iters, cfg.cluster.restarts)?;
    info!(
        "k-means: {} documents, d = {}, K_init = {k}, SSE {:.6} after {} iterations{}",
        emb.len(),
        emb.dim(),
        fit.sse(),
        fit.iterations,
        if fit.converged { "" } else { " (not converged)" }
    );
    let mut cs = fit.clusters;
    if let Some(s) = &scores {
        let means = cluster_mean_scores(&cs, s)?;
        cs = cs.with_mean_scores(means)?;
    }
    create_out(cfg)?;
    let path = cfg.clusters_path();
    cs.write_file(&path)?;
    info!("wrote {}", path.display());
    Ok(())
}

fn prune_merge(cfg: &RunConfig) -> Result<()> {
    let input = require(Some(&cfg.clusters_path()), "cluster set")?;
    let scores_path = require(cfg.paths.scores.as_ref(), "scores")?;
    let axes = cfg.prune.parsed_axes()?;

    let cs = ClusterSet::read_file(&input)?;
    let scores = QualityScores::read_file(&scores_path)?;
    let pruned = prune_clusters(&cs, &scores, cfg.prune.threshold, &axes)?;
    let merged = merge_clusters(&pruned, cfg.merge.distance)?;
    info!(
        "K_init {} -> K_pruned {} -> K_enhanced {} (threshold {}, distance {})",
        cs.len(),
        pruned.len(),
        merged.len(),
        cfg.prune.threshold,
        cfg.merge.distance
    );
    create_out(cfg)?;
    let path = cfg.merged_path();
    merged.write_file(&path)?;
    info!("wrote {}", path.display());
    Ok(())
}

/// Builds the configured evaluator for `cs`.
pub fn build_evaluator(cfg: &RunConfig, cs: &ClusterSet) -> Result<Box<dyn Evaluator>> {
    let k = cs.len();
    let e = &cfg.evaluator;
    let inner: Box<dyn Evaluator> = match e.kind {
        EvaluatorKind::Synthetic => {
            let seed = e.seed.unwrap_or(cfg.seed);
            let optimum = || -> Result<MixtureWeights> {
                match &e.optimum {
                    Some(w) if w.len() != k => Err(Error::InvalidArgument(format!(
                        "evaluator.optimum has {} entries, the cluster set has {k}",
                        w.len()
                    ))),
                    Some(w) => MixtureWeights::new(w.clone()),
                    None => {
                        let prior = DirichletPrior::from_token_totals(cs.token_totals(), cfg.search.prior_scale)?;
                        SyntheticOracle::plant_optimum(&prior, cfg.search.floor, seed)
                    }
                }
            };
            let oracle = match e.oracle {
                OracleChoice::Linear => SyntheticOracle::linear(optimum()?),
                OracleChoice::QuadraticBowl => SyntheticOracle::quadratic_bowl(optimum()?),
                OracleChoice::RuggedMultimodal => SyntheticOracle::random_rugged(k, e.bumps, seed)?,
            };
            let oracle = oracle.with_noise(e.noise_sd, seed)?;
            info!("synthetic oracle {:?}, optimum {:?}", oracle.kind(), oracle.optimum().as_slice());
            Box::new(oracle)
        }
        EvaluatorKind::External => {
            let command = e
                .command
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("evaluator.command is not set".into()))?;
            if !(e.timeout_secs > 0.0 && e.timeout_secs.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "evaluator.timeout_secs {} must be positive",
                    e.timeout_secs
                )));
            }
            let mut ext = ExternalCommand::new(command.clone(), Duration::from_secs_f64(e.timeout_secs))?
                .deterministic(e.deterministic)
                .with_dimension(k);
            if let Some(dir) = &e.workdir {
                ext = ext.in_dir(dir);
            }
            Box::new(ext)
        }
    };
    match &e.cache {
        Some(path) => Ok(Box::new(Cached::open(inner, path)?)),
        None => Ok(inner),
    }
}

fn search(cfg: &RunConfig, resume: bool, save_predictor: Option<&Path>, stop_after: Option<usize>) -> Result<()> {
    let input = require(Some(&cfg.merged_path()), "cluster set")?;
    let state_path = cfg.state_path();
    if resume {
        require(Some(&state_path), "search checkpoint")?;
    }
    let mut plan = cfg.search.clone();
    plan.seed = cfg.seed;
    plan.validate()?;
    if stop_after == Some(0) {
        return Err(Error::InvalidArgument("--stop-after must be at least 1".into()));
    }

    let cs = ClusterSet::read_file(&input)?;
    let eval = build_evaluator(cfg, &cs)?;
    let mut driver = if resume {
        let d = SearchDriver::from_checkpoint(&state_path, plan)?.check_evaluator(&eval)?;
        if d.state().clusters() != cs.len() {
            return Err(Error::IncompatibleState(format!(
                "checkpoint has {} clusters, {} has {}",
                d.state().clusters(),
                input.display(),
                cs.len()
            )));
        }
        info!("resuming after iteration {}", d.state().iteration);
        d
    } else {
        SearchDriver::new(cs.token_totals(), plan)?.with_checkpoint(&state_path)
    };
    create_out(cfg)?;
    info!("search over {} clusters with {}", cs.len(), eval.description());
    let outcome = driver.run_until(&eval, stop_after);
    write_history(cfg, &driver)?;
    let Some(result) = outcome? else {
        info!(
            "stopped after iteration {} of {}; continue with --resume",
            driver.state().iteration,
            driver.state().plan.iterations()
        );
        return Ok(());
    };
    write_result(cfg, &result)?;
    if let Some(path) = save_predictor {
        match driver.state().predictors.last() {
            Some(p) => {
                p.write_file(path)?;
                info!("wrote predictor to {}", path.display());
            }
            None => warn!("no predictor was fitted; nothing saved"),
        }
    }
    Ok(())
}

fn write_history(cfg: &RunConfig, driver: &SearchDriver) -> Result<()> {
    let path = cfg.history_path();
    let text = serde_json::to_string_pretty(&driver.state().history)? + "\n";
    std::fs::write(&path, text).map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))
}

fn write_result(cfg: &RunConfig, result: &SearchResult) -> Result<()> {
    let path = cfg.result_path();
    result.write_file(&path)?;
    info!(
        "best measured {:.6} at {:?} ({} evaluations)",
        result.best_measured,
        result.best_mixture.as_slice(),
        result.total_evaluations
    );
    info!("wrote {}", path.display());
    Ok(())
}

fn sample(cfg: &RunConfig) -> Result<()> {
    let clusters = require(Some(&cfg.merged_path()), "cluster set")?;
    let weights_from_result = cfg.sample.weights.is_none();
    let result_path = cfg.result_path();
    if weights_from_result {
        require(Some(&result_path), "search result")?;
    }
    let source = match (&cfg.paths.store, &cfg.paths.documents) {
        (Some(dir), _) if dir.is_dir() => Ok(dir.clone()),
        (Some(dir), _) => Err(Error::InvalidArgument(format!("store {} is not a directory", dir.display()))),
        (None, Some(docs)) => require(Some(docs), "documents"),
        (None, None) => Err(Error::InvalidArgument("set paths.store or paths.documents".into())),
    }?;

    let cs = ClusterSet::read_file(&clusters)?;
    let weights = match &cfg.sample.weights {
        Some(w) => MixtureWeights::new(w.clone())?,
        None => {
            let r = SearchResult::read_file(&result_path)?;
            match cfg.sample.source {
                WeightSource::BestMeasured => r.best_mixture,
                WeightSource::BestPredicted => r.best_predicted_mixture,
            }
        }
    };
    let store = if cfg.paths.store.is_some() {
        ClusterStore::read_dir(&source)?
    } else {
        ClusterStore::from_documents(&cs, read_documents(&source)?)?
    };
    if store.len() != cs.len() || weights.len() != cs.len() {
        return Err(Error::InvalidArgument(format!(
            "cluster counts disagree: {} clusters, {} in the store, {} weights",
            cs.len(),
            store.len(),
            weights.len()
        )));
    }
    let plan = SamplePlan {
        weights,
        total_tokens: cfg.sample.total_tokens,
        seed: cfg.seed,
        with_replacement: cfg.sample.with_replacement,
    };
    let drawn = sample_corpus(&store, &plan)?;
    create_out(cfg)?;
    let docs = cfg.out.join(SAMPLE_FILE);
    let manifest = cfg.out.join(MANIFEST_FILE);
    drawn.write_jsonl(&store, &docs)?;
    drawn.manifest.write_file(&manifest)?;
    info!(
        "sampled {} documents, {} tokens (target {}); wrote {} and {}",
        drawn.picks.len(),
        drawn.manifest.realized_tokens,
        plan.total_tokens,
        docs.display(),
        manifest.display()
    );
    Ok(())
}

fn report_cmd(cfg: &RunConfig) -> Result<()> {
    let path = require(Some(&cfg.history_path()), "history")?;
    let history = report::read_history(&path)?;
    create_out(cfg)?;
    for f in report::write_report(&history, &cfg.out)? {
        info!("wrote {}", f.display());
    }
    Ok(())
}
