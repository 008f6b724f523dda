//! Measuring a mixture's performance.
//!
//! Everything that trains or scores models lives behind [`Evaluator`]. The search
//! only ever sees `weights -> performance`.

mod cache;
mod external;
mod oracle;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

pub use cache::{canonical_key, Cached};
pub use external::ExternalCommand;
pub use oracle::{Bump, OracleKind, SyntheticOracle};

use crate::simplex::MixtureWeights;
use crate::{Error, Result};

pub trait Evaluator: Send + Sync {
    fn evaluate(&self, weights: &MixtureWeights) -> Result<f64>;

    /// True when identical inputs always produce identical outputs.
    fn is_deterministic(&self) -> bool;

    fn description(&self) -> String;

    /// Number of clusters the evaluator expects, when it knows.
    fn dimension(&self) -> Option<usize> {
        None
    }
}

impl<E: Evaluator + ?Sized> Evaluator for &E {
    fn evaluate(&self, weights: &MixtureWeights) -> Result<f64> {
        (**self).evaluate(weights)
    }
    fn is_deterministic(&self) -> bool {
        (**self).is_deterministic()
    }
    fn description(&self) -> String {
        (**self).description()
    }
    fn dimension(&self) -> Option<usize> {
        (**self).dimension()
    }
}

impl<E: Evaluator + ?Sized> Evaluator for Box<E> {
    fn evaluate(&self, weights: &MixtureWeights) -> Result<f64> {
        (**self).evaluate(weights)
    }
    fn is_deterministic(&self) -> bool {
        (**self).is_deterministic()
    }
    fn description(&self) -> String {
        (**self).description()
    }
    fn dimension(&self) -> Option<usize> {
        (**self).dimension()
    }
}

impl<E: Evaluator + ?Sized> Evaluator for Arc<E> {
    fn evaluate(&self, weights: &MixtureWeights) -> Result<f64> {
        (**self).evaluate(weights)
    }
    fn is_deterministic(&self) -> bool {
        (**self).is_deterministic()
    }
    fn description(&self) -> String {
        (**self).description()
    }
    fn dimension(&self) -> Option<usize> {
        (**self).dimension()
    }
}

/// Writes the weights file handed to external commands: a `K=<count>` header
/// followed by one decimal per line in cluster order.
pub fn write_weights_file(path: &Path, weights: &MixtureWeights) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::file(path, e))?;
    let mut w = BufWriter::new(f);
    writeln!(w, "K={}", weights.len())?;
    for x in weights.iter() {
        writeln!(w, "{x}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_weights_file(path: &Path) -> Result<MixtureWeights> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let bad = |m: &str| Error::Data(format!("{}: {m}", path.display()));
    let k: usize = lines
        .next()
        .and_then(|h| h.trim().strip_prefix("K="))
        .and_then(|k| k.parse().ok())
        .ok_or_else(|| bad("missing `K=<count>` header"))?;
    let values = lines
        .map(|l| l.trim().parse::<f64>().map_err(|_| bad("malformed weight")))
        .collect::<Result<Vec<_>>>()?;
    if values.len() != k {
        return Err(bad(&format!("header says {k} weights, found {}", values.len())));
    }
    MixtureWeights::new(values)
}

pub(crate) fn check_dim(expected: usize, w: &MixtureWeights) -> Result<()> {
    if w.len() != expected {
        return Err(Error::InvalidArgument(format!(
            "evaluator expects {expected} weights, got {}",
            w.len()
        )));
    }
    Ok(())
}
