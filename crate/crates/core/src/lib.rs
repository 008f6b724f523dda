//! Data-mixture search over clustered pre-training corpora.
//!
//! The pipeline runs in stages that can each be re-run on their own:
//!
//! 1. [`cluster`]: ingest precomputed document embeddings, run seeded k-means,
//!    drop low-quality clusters and fold together clusters whose centroids sit
//!    close to each other.
//! 2. [`sampler`]: draw candidate mixtures from a token-weighted Dirichlet prior.
//! 3. [`predictor`]: fit a boosted regression-tree surrogate from mixture weights
//!    to measured performance.
//! 4. [`search`]: alternate sampling, surrogate ranking with Top-N pruning and
//!    refitting across a fixed budget schedule, with checkpoint/resume.
//! 5. [`corpus`]: materialize a mixture into a token-budgeted document sample.
//!
//! Performance measurements sit behind the [`eval::Evaluator`] trait: synthetic
//! oracles for testing, or an external command that trains and scores a proxy model.
//!
//! Data-parallel inner loops go through [`par`], which uses rayon when the
//! `parallel` feature is enabled (the default) and plain iterators otherwise.
//! Results are identical either way.

pub mod cluster;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod fixture;
pub mod par;
pub mod predictor;
pub mod report;
pub mod sampler;
pub mod search;
pub mod seed;
pub mod simplex;

pub use error::{Error, Result};
pub use simplex::{ConfigSample, Direction, MixtureWeights, SearchObjective};
