use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{check_dim, Evaluator};
use crate::sampler::DirichletPrior;
use crate::simplex::MixtureWeights;
use crate::{seed, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    Linear,
    QuadraticBowl,
    RuggedMultimodal,
}

/// One peak of the rugged landscape: `depth - ‖w - center‖²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: MixtureWeights,
    pub depth: f64,
}

/// Closed-form test objectives on the simplex, maximized by construction.
///
/// Noise is keyed by a hash of the input weights and the oracle seed, so repeated
/// calls with the same mixture return the same value in any process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticOracle {
    kind: OracleKind,
    optimum: MixtureWeights,
    bumps: Vec<Bump>,
    noise_sd: f64,
    seed: u64,
}

impl SyntheticOracle {
    /// `dot(w, optimum)`: best at the vertex of the largest optimum entry.
    pub fn linear(optimum: MixtureWeights) -> Self {
        Self::plain(OracleKind::Linear, optimum)
    }

    /// `-‖w - optimum‖²`: zero at the optimum, negative elsewhere.
    pub fn quadratic_bowl(optimum: MixtureWeights) -> Self {
        Self::plain(OracleKind::QuadraticBowl, optimum)
    }

    fn plain(kind: OracleKind, optimum: MixtureWeights) -> Self {
        SyntheticOracle {
            kind,
            optimum,
            bumps: Vec::new(),
            noise_sd: 0.0,
            seed: 0,
        }
    }

    /// Explicit bumps. Every center must be a strict local maximum of the landscape
    /// and there must be at least three.
    pub fn rugged(bumps: Vec<Bump>) -> Result<Self> {
        if bumps.len() < 3 {
            return Err(Error::InvalidArgument("a rugged oracle needs at least 3 bumps".into()));
        }
        let k = bumps[0].center.len();
        if bumps.iter().any(|b| b.center.len() != k || !b.depth.is_finite()) {
            return Err(Error::InvalidArgument("bump centers disagree in dimension".into()));
        }
        if !bumps_are_local_optima(&bumps) {
            return Err(Error::InvalidArgument(
                "some bump is shadowed by another and is not a local optimum".into(),
            ));
        }
        let deepest = deepest(&bumps);
        Ok(SyntheticOracle {
            kind: OracleKind::RuggedMultimodal,
            optimum: bumps[deepest].center.clone(),
            bumps,
            noise_sd: 0.0,
            seed: 0,
        })
    }

    /// Plants `n_bumps` ≥ 3 peaks with sparse centers and distinct depths in (0.5, 1].
    ///
    /// The deepest bump has depth 1. Draws are repeated until every center is a
    /// strict local maximum.
    pub fn random_rugged(k: usize, n_bumps: usize, seed: u64) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidArgument("rugged oracle needs at least 2 clusters".into()));
        }
        if n_bumps < 3 {
            return Err(Error::InvalidArgument("a rugged oracle needs at least 3 bumps".into()));
        }
        let prior = DirichletPrior::new(vec![0.5; k], 0.5 * k as f64)?;
        for attempt in 0..1000u64 {
            let s = seed::derive(seed, &[attempt]);
            let mut rng = seed::rng(s);
            let bumps: Vec<Bump> = (0..n_bumps)
                .map(|i| Bump {
                    center: prior.draw(s, i as u64),
                    depth: if i == 0 {
                        1.0
                    } else {
                        0.5 + 0.45 * rng.random::<f64>()
                    },
                })
                .collect();
            if let Ok(o) = Self::rugged(bumps) {
                return Ok(o);
            }
        }
        Err(Error::InvalidArgument(format!(
            "could not plant {n_bumps} separated bumps in {k} dimensions"
        )))
    }

    /// A planted optimum that looks like a typical candidate: one draw from
    /// `prior`, sparsified at `floor`.
    pub fn plant_optimum(prior: &DirichletPrior, floor: f64, seed: u64) -> Result<MixtureWeights> {
        prior.draw(seed::derive(seed, &[seed::TAG_ORACLE]), 0).sparsify(floor)
    }

    /// Adds Gaussian noise with standard deviation `sd`, keyed by `seed` and the input.
    pub fn with_noise(mut self, sd: f64, seed: u64) -> Result<Self> {
        if !(sd >= 0.0 && sd.is_finite()) {
            return Err(Error::InvalidArgument(format!("noise sd {sd} must be non-negative")));
        }
        self.noise_sd = sd;
        self.seed = seed;
        Ok(self)
    }

    pub fn kind(&self) -> OracleKind {
        self.kind
    }

    /// The planted maximizer (the deepest bump's center for rugged oracles).
    pub fn optimum(&self) -> &MixtureWeights {
        &self.optimum
    }

    pub fn bumps(&self) -> &[Bump] {
        &self.bumps
    }

    pub fn dim(&self) -> usize {
        self.optimum.len()
    }

    /// Objective value without noise.
    pub fn clean_value(&self, w: &MixtureWeights) -> Result<f64> {
        check_dim(self.dim(), w)?;
        Ok(match self.kind {
            OracleKind::Linear => w.iter().zip(self.optimum.iter()).map(|(a, b)| a * b).sum(),
            OracleKind::QuadraticBowl => -w.squared_distance(&self.optimum),
            OracleKind::RuggedMultimodal => self
                .bumps
                .iter()
                .map(|b| b.depth - w.squared_distance(&b.center))
                .fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

fn deepest(bumps: &[Bump]) -> usize {
    let mut best = 0;
    for (i, b) in bumps.iter().enumerate() {
        if b.depth > bumps[best].depth {
            best = i;
        }
    }
    best
}

/// Each center must beat every other bump at its own location.
fn bumps_are_local_optima(bumps: &[Bump]) -> bool {
    bumps.iter().enumerate().all(|(i, b)| {
        bumps
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .all(|(_, o)| b.depth > o.depth - b.center.squared_distance(&o.center))
    })
}

impl Evaluator for SyntheticOracle {
    fn evaluate(&self, weights: &MixtureWeights) -> Result<f64> {
        let clean = self.clean_value(weights)?;
        if self.noise_sd == 0.0 {
            return Ok(clean);
        }
        let mut rng = seed::rng(seed::hash_f64s(self.seed, weights.as_slice()));
        let z: f64 = rng.sample(StandardNormal);
        Ok(clean + self.noise_sd * z)
    }

    fn is_deterministic(&self) -> bool {
        true
    }

    fn description(&self) -> String {
        format!(
            "synthetic {:?} oracle over {} clusters (noise sd {})",
            self.kind,
            self.dim(),
            self.noise_sd
        )
    }

    fn dimension(&self) -> Option<usize> {
        Some(self.dim())
    }
}
