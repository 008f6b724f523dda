//! Dirichlet sampling of candidate mixtures.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use log::warn;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::cluster::ClusterSet;
use crate::simplex::MixtureWeights;
use crate::{par, seed, Error, Result};

pub const DEFAULT_SCALE: f64 = 0.5;
pub const DEFAULT_FLOOR: f64 = 0.02;
pub const DEFAULT_POOL_SIZE: usize = 100_000;

/// Fraction of `scale` a zero-token cluster's concentration is clamped to.
const ZERO_TOKEN_CLAMP: f64 = 1e-6;

/// Dirichlet concentration over clusters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirichletPrior {
    concentration: Vec<f64>,
    scale: f64,
}

impl DirichletPrior {
    pub fn new(concentration: Vec<f64>, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidArgument(format!("prior scale {scale} must be positive")));
        }
        if concentration.is_empty() {
            return Err(Error::InvalidArgument("prior has no clusters".into()));
        }
        if let Some(c) = concentration.iter().find(|c| !(**c > 0.0 && c.is_finite())) {
            return Err(Error::InvalidArgument(format!(
                "concentration {c} must be positive"
            )));
        }
        Ok(DirichletPrior {
            concentration,
            scale,
        })
    }

    /// Concentration proportional to each cluster's share of tokens, times `scale`.
    pub fn from_tokens(cs: &ClusterSet, scale: f64) -> Result<Self> {
        Self::from_token_totals(cs.token_totals(), scale)
    }

    /// As [`DirichletPrior::from_tokens`] from raw totals. Zero-token clusters are
    /// clamped to a tiny positive concentration.
    pub fn from_token_totals(tokens: &[u64], scale: f64) -> Result<Self> {
        let total: u64 = tokens.iter().sum();
        if total == 0 {
            return Err(Error::InvalidArgument("clusters hold no tokens".into()));
        }
        let concentration = tokens
            .iter()
            .enumerate()
            .map(|(c, &t)| {
                if t == 0 {
                    warn!("cluster {c} holds no tokens; clamping its concentration");
                    scale * ZERO_TOKEN_CLAMP
                } else {
                    scale * t as f64 / total as f64
                }
            })
            .collect();
        Self::new(concentration, scale)
    }

    /// Moves the prior mean toward `center`, keeping the total concentration.
    ///
    /// `mix` = 0 leaves the prior as is; 1 centers it fully on `center`.
    pub fn recentered(&self, center: &MixtureWeights, mix: f64) -> Result<Self> {
        if center.len() != self.len() {
            return Err(Error::InvalidArgument("center dimension mismatch".into()));
        }
        if !(0.0..=1.0).contains(&mix) {
            return Err(Error::InvalidArgument(format!("mix {mix} outside [0, 1]")));
        }
        let total: f64 = self.concentration.iter().sum();
        let concentration = self
            .concentration
            .iter()
            .zip(center.iter())
            .map(|(&c, &w)| {
                let mean = (1.0 - mix) * c / total + mix * w;
                (total * mean).max(self.scale * ZERO_TOKEN_CLAMP)
            })
            .collect();
        Self::new(concentration, self.scale)
    }

    pub fn concentration(&self) -> &[f64] {
        &self.concentration
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn len(&self) -> usize {
        self.concentration.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concentration.is_empty()
    }

    /// Dirichlet mean `α_i / Σα`.
    pub fn mean(&self) -> Vec<f64> {
        let total: f64 = self.concentration.iter().sum();
        self.concentration.iter().map(|c| c / total).collect()
    }

    /// Draw number `index` of the stream keyed by `seed`, before sparsification.
    ///
    /// Gamma variates are drawn in log space so very small concentrations cannot
    /// underflow every coordinate to zero.
    pub fn draw(&self, seed: u64, index: u64) -> MixtureWeights {
        let mut rng = seed::stream_rng(seed, index);
        let logs: Vec<f64> = self
            .concentration
            .iter()
            .map(|&a| log_gamma_variate(&mut rng, a))
            .collect();
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let raw: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
        MixtureWeights::normalize(&raw).expect("the largest coordinate is exactly one")
    }
}

/// Log of a Gamma(shape, 1) variate.
fn log_gamma_variate<R: Rng>(rng: &mut R, shape: f64) -> f64 {
    if shape >= 1.0 {
        let g = Gamma::new(shape, 1.0).expect("shape is positive");
        g.sample(rng).ln()
    } else {
        // Gamma(a) = Gamma(a + 1) · U^(1/a)
        let g = Gamma::new(shape + 1.0, 1.0).expect("shape is positive");
        let u: f64 = 1.0 - rng.random::<f64>();
        g.sample(rng).ln() + u.ln() / shape
    }
}

/// An ordered, seeded set of candidate mixtures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePool {
    pub candidates: Vec<MixtureWeights>,
    pub seed: u64,
    pub iteration: usize,
}

impl CandidatePool {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    /// Writes one JSON weight array per line.
    pub fn write_file(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::file(path, e))?;
        let mut w = BufWriter::new(f);
        for c in &self.candidates {
            serde_json::to_writer(&mut w, c)?;
            writeln!(w)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Draws `count` sparsified mixtures. Draw `i` depends only on `(seed, i)`.
pub fn sample_pool(prior: &DirichletPrior, count: usize, floor: f64, seed: u64) -> Result<CandidatePool> {
    sample_range(prior, 0, count, floor, seed).map(|candidates| CandidatePool {
        candidates,
        seed,
        iteration: 0,
    })
}

/// Draws indices `start..start + count` of the stream keyed by `seed`.
pub fn sample_range(
    prior: &DirichletPrior,
    start: u64,
    count: usize,
    floor: f64,
    seed: u64,
) -> Result<Vec<MixtureWeights>> {
    if count == 0 {
        return Err(Error::InvalidArgument("pool size must be at least 1".into()));
    }
    if !(0.0..1.0).contains(&floor) {
        return Err(Error::InvalidArgument(format!("sparsity floor {floor} outside [0, 1)")));
    }
    Ok(par::map_range(count, |i| {
        prior
            .draw(seed, start + i as u64)
            .sparsify(floor)
            .expect("floor already checked")
    }))
}
