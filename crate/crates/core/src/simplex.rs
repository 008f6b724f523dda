//! Mixture weights on the probability simplex and the samples built from them.

use std::fmt;
use std::ops::Index;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Absolute tolerance on the sum of a weight vector.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Sampling proportions over the active clusters.
///
/// Entries are non-negative and sum to one within [`SIMPLEX_TOL`]. Serializes as a
/// flat array of decimals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct MixtureWeights(Vec<f64>);

impl MixtureWeights {
    /// Validates an already-normalized vector.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::ConstraintViolation("mixture has no entries".into()));
        }
        if let Some((i, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !w.is_finite() || **w < 0.0)
        {
            return Err(Error::ConstraintViolation(format!(
                "entry {i} is {w}, expected a finite non-negative value"
            )));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::ConstraintViolation(format!(
                "entries sum to {sum}, expected 1"
            )));
        }
        Ok(MixtureWeights(weights))
    }

    /// Scales a non-negative vector onto the simplex.
    pub fn normalize(raw: &[f64]) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::ConstraintViolation("cannot normalize an empty vector".into()));
        }
        if let Some((i, w)) = raw
            .iter()
            .enumerate()
            .find(|(_, w)| !w.is_finite() || **w < 0.0)
        {
            return Err(Error::ConstraintViolation(format!(
                "entry {i} is {w}, expected a finite non-negative value"
            )));
        }
        let sum: f64 = raw.iter().sum();
        if sum <= 0.0 {
            return Err(Error::ConstraintViolation("all entries are zero".into()));
        }
        if sum == 1.0 {
            return Ok(MixtureWeights(raw.to_vec()));
        }
        Ok(MixtureWeights(raw.iter().map(|w| w / sum).collect()))
    }

    /// Uniform weights over `k` clusters.
    pub fn uniform(k: usize) -> Result<Self> {
        Self::normalize(&vec![1.0; k])
    }

    /// The vertex putting all mass on cluster `index`.
    pub fn vertex(k: usize, index: usize) -> Result<Self> {
        if index >= k {
            return Err(Error::InvalidArgument(format!(
                "vertex {index} out of range for {k} clusters"
            )));
        }
        let mut w = vec![0.0; k];
        w[index] = 1.0;
        Ok(MixtureWeights(w))
    }

    /// Zeroes entries below `floor` and renormalizes the rest.
    ///
    /// If every entry falls below the floor the largest one (lowest index on ties)
    /// takes all the mass. A floor of zero returns the input unchanged.
    pub fn sparsify(&self, floor: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&floor) {
            return Err(Error::InvalidArgument(format!(
                "sparsity floor {floor} outside [0, 1)"
            )));
        }
        if self.0.iter().all(|&w| w >= floor) {
            return Ok(self.clone());
        }
        let kept: Vec<f64> = self
            .0
            .iter()
            .map(|&w| if w < floor { 0.0 } else { w })
            .collect();
        if kept.iter().all(|&w| w == 0.0) {
            return Self::vertex(self.len(), self.argmax());
        }
        Self::normalize(&kept)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    /// Index of the largest entry, lowest index on ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &w) in self.0.iter().enumerate() {
            if w > self.0[best] {
                best = i;
            }
        }
        best
    }

    /// True when every entry is within `tol` of the other vector's entry.
    pub fn approx_eq(&self, other: &MixtureWeights, tol: f64) -> bool {
        self.len() == other.len()
            && self
                .0
                .iter()
                .zip(&other.0)
                .all(|(a, b)| (a - b).abs() <= tol)
    }

    pub fn l1_distance(&self, other: &MixtureWeights) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b).abs()).sum()
    }

    pub fn squared_distance(&self, other: &MixtureWeights) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b) * (a - b)).sum()
    }
}

impl TryFrom<Vec<f64>> for MixtureWeights {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        MixtureWeights::new(v)
    }
}

impl From<MixtureWeights> for Vec<f64> {
    fn from(w: MixtureWeights) -> Self {
        w.0
    }
}

impl Index<usize> for MixtureWeights {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl fmt::Display for MixtureWeights {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, w) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{w:.4}")?;
        }
        write!(f, "]")
    }
}

/// Whether larger or smaller performance values are better.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    #[default]
    Maximize,
    Minimize,
}

impl Direction {
    /// True when `a` is strictly better than `b`.
    pub fn better(self, a: f64, b: f64) -> bool {
        match self {
            Direction::Maximize => a > b,
            Direction::Minimize => a < b,
        }
    }

    /// Maps a value to a score where larger is always better.
    pub fn score(self, v: f64) -> f64 {
        match self {
            Direction::Maximize => v,
            Direction::Minimize => -v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct SearchObjective {
    pub direction: Direction,
    #[serde(default)]
    pub description: String,
}

impl SearchObjective {
    pub fn maximize(description: impl Into<String>) -> Self {
        SearchObjective {
            direction: Direction::Maximize,
            description: description.into(),
        }
    }

    pub fn minimize(description: impl Into<String>) -> Self {
        SearchObjective {
            direction: Direction::Minimize,
            description: description.into(),
        }
    }
}

/// One evaluated mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSample {
    pub weights: MixtureWeights,
    pub performance: f64,
    pub iteration: usize,
}

impl ConfigSample {
    pub fn new(weights: MixtureWeights, performance: f64, iteration: usize) -> Result<Self> {
        if !performance.is_finite() {
            return Err(Error::ConstraintViolation(format!(
                "performance {performance} is not finite"
            )));
        }
        if iteration < 1 {
            return Err(Error::ConstraintViolation("iteration must be at least 1".into()));
        }
        Ok(ConfigSample {
            weights,
            performance,
            iteration,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn assert_weights(w: &MixtureWeights, expected: &[f64]) {
        assert_eq!(w.len(), expected.len());
        for (a, b) in w.iter().zip(expected) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn normalize_examples() {
        assert_weights(&MixtureWeights::normalize(&[2.0, 2.0]).unwrap(), &[0.5, 0.5]);
        assert_weights(
            &MixtureWeights::normalize(&[1.0, 0.0, 0.0]).unwrap(),
            &[1.0, 0.0, 0.0],
        );
        assert_weights(
            &MixtureWeights::normalize(&[3.0, 1.0, 4.0, 2.0]).unwrap(),
            &[0.3, 0.1, 0.4, 0.2],
        );
    }

    #[test]
    fn normalize_rejects_bad_input() {
        assert!(matches!(
            MixtureWeights::normalize(&[0.0, 0.0]),
            Err(Error::ConstraintViolation(_))
        ));
        assert!(matches!(
            MixtureWeights::normalize(&[1.0, -0.5]),
            Err(Error::ConstraintViolation(_))
        ));
        assert!(MixtureWeights::normalize(&[]).is_err());
        assert!(MixtureWeights::normalize(&[f64::NAN, 1.0]).is_err());
    }

    #[test]
    fn new_checks_sum() {
        assert!(MixtureWeights::new(vec![0.5, 0.5]).is_ok());
        assert!(MixtureWeights::new(vec![0.5, 0.5 + 1e-10]).is_ok());
        assert!(MixtureWeights::new(vec![0.5, 0.6]).is_err());
    }

    #[test]
    fn sparsify_examples() {
        let w = MixtureWeights::new(vec![0.50, 0.49, 0.01]).unwrap();
        let s = w.sparsify(0.02).unwrap();
        assert_weights(&s, &[0.50 / 0.99, 0.49 / 0.99, 0.0]);

        let one = MixtureWeights::new(vec![1.0]).unwrap();
        assert_eq!(one.sparsify(0.02).unwrap(), one);

        let flat = MixtureWeights::uniform(4).unwrap();
        assert_eq!(flat.sparsify(0.0).unwrap(), flat);
    }

    #[test]
    fn sparsify_all_below_floor_picks_lowest_index_max() {
        let w = MixtureWeights::uniform(4).unwrap();
        assert_eq!(w.sparsify(0.5).unwrap().as_slice(), &[1.0, 0.0, 0.0, 0.0]);
        let w = MixtureWeights::new(vec![0.3, 0.35, 0.35]).unwrap();
        assert_eq!(w.sparsify(0.9).unwrap().as_slice(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn sparsify_rejects_bad_floor() {
        let w = MixtureWeights::uniform(2).unwrap();
        assert!(w.sparsify(1.0).is_err());
        assert!(w.sparsify(-0.1).is_err());
    }

    #[test]
    fn serializes_as_flat_array() {
        let w = MixtureWeights::new(vec![0.25, 0.75]).unwrap();
        assert_eq!(serde_json::to_string(&w).unwrap(), "[0.25,0.75]");
        let back: MixtureWeights = serde_json::from_str("[0.25,0.75]").unwrap();
        assert_eq!(back, w);
        assert!(serde_json::from_str::<MixtureWeights>("[0.25,0.5]").is_err());
    }

    #[test]
    fn config_sample_guards() {
        let w = MixtureWeights::uniform(2).unwrap();
        assert!(ConfigSample::new(w.clone(), f64::NAN, 1).is_err());
        assert!(ConfigSample::new(w.clone(), 0.3, 0).is_err());
        assert!(ConfigSample::new(w, 0.3, 1).is_ok());
    }

    fn raw_vec() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..100.0, 1..40)
            .prop_filter("needs a positive entry", |v| v.iter().any(|&x| x > 0.0))
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(raw in raw_vec()) {
            let once = MixtureWeights::normalize(&raw).unwrap();
            let twice = MixtureWeights::normalize(once.as_slice()).unwrap();
            prop_assert!(once.approx_eq(&twice, 1e-15));
        }

        #[test]
        fn sparsify_stays_on_simplex(raw in raw_vec(), floor in 0.0f64..0.99) {
            let w = MixtureWeights::normalize(&raw).unwrap();
            let s = w.sparsify(floor).unwrap();
            prop_assert_eq!(s.len(), w.len());
            prop_assert!(s.iter().all(|&x| x >= 0.0));
            prop_assert!((s.iter().sum::<f64>() - 1.0).abs() <= SIMPLEX_TOL);
        }

        #[test]
        fn sparsify_zero_floor_is_identity(raw in raw_vec()) {
            let w = MixtureWeights::normalize(&raw).unwrap();
            prop_assert_eq!(w.sparsify(0.0).unwrap(), w);
        }
    }
}
