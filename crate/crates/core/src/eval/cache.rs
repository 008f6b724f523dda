use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Mutex, RwLock};

use log::warn;
use sha2::{Digest, Sha256};

use super::Evaluator;
use crate::simplex::MixtureWeights;
use crate::{Error, Result};

/// Decimal places kept in cache keys.
pub const CACHE_DECIMALS: usize = 12;

/// Canonical text form of a mixture used as the cache key.
pub fn canonical_key(w: &MixtureWeights) -> String {
    w.iter()
        .map(|x| format!("{x:.CACHE_DECIMALS$}"))
        .collect::<Vec<_>>()
        .join(",")
}

fn key_hash(key: &str) -> String {
    let digest = Sha256::digest(key.as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Memoizes an evaluator in an append-only file of
/// `<hash> <canonical weights> <value>` lines.
pub struct Cached<E> {
    inner: E,
    path: PathBuf,
    entries: RwLock<HashMap<String, f64>>,
    appender: Mutex<File>,
    inner_calls: AtomicUsize,
}

impl<E: Evaluator> Cached<E> {
    /// Loads any existing entries from `cache_file` and opens it for appending.
    /// Corrupt lines are skipped with a warning.
    pub fn open(inner: E, cache_file: &Path) -> Result<Self> {
        let mut entries = HashMap::new();
        if cache_file.exists() {
            let f = File::open(cache_file).map_err(|e| Error::file(cache_file, e))?;
            for (lineno, line) in BufReader::new(f).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                match parse_line(&line) {
                    Some((key, value)) => {
                        entries.insert(key, value);
                    }
                    None => warn!(
                        "{}:{}: skipping corrupt cache line",
                        cache_file.display(),
                        lineno + 1
                    ),
                }
            }
        }
        let appender = OpenOptions::new()
            .create(true)
            .append(true)
            .open(cache_file)
            .map_err(|e| Error::file(cache_file, e))?;
        Ok(Cached {
            inner,
            path: cache_file.to_path_buf(),
            entries: RwLock::new(entries),
            appender: Mutex::new(appender),
            inner_calls: AtomicUsize::new(0),
        })
    }

    /// Number of times the wrapped evaluator has been called.
    pub fn inner_calls(&self) -> usize {
        self.inner_calls.load(Ordering::Relaxed)
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn inner(&self) -> &E {
        &self.inner
    }
}

fn parse_line(line: &str) -> Option<(String, f64)> {
    let mut parts = line.split_whitespace();
    let (hash, key, value) = (parts.next()?, parts.next()?, parts.next()?);
    if parts.next().is_some() || key_hash(key) != hash {
        return None;
    }
    let value: f64 = value.parse().ok()?;
    value.is_finite().then(|| (key.to_string(), value))
}

impl<E: Evaluator> Evaluator for Cached<E> {
    fn evaluate(&self, weights: &MixtureWeights) -> Result<f64> {
        let key = canonical_key(weights);
        if let Some(&v) = self.entries.read().expect("cache lock").get(&key) {
            return Ok(v);
        }
        self.inner_calls.fetch_add(1, Ordering::Relaxed);
        let value = self.inner.evaluate(weights)?;
        {
            let mut f = self.appender.lock().expect("cache appender lock");
            writeln!(f, "{} {} {}", key_hash(&key), key, value)?;
            f.flush()?;
        }
        self.entries.write().expect("cache lock").insert(key, value);
        Ok(value)
    }

    fn is_deterministic(&self) -> bool {
        self.inner.is_deterministic()
    }

    fn description(&self) -> String {
        format!("{} (cached in {})", self.inner.description(), self.path.display())
    }

    fn dimension(&self) -> Option<usize> {
        self.inner.dimension()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::SyntheticOracle;
    use crate::sampler::{sample_pool, DirichletPrior};

    fn oracle() -> SyntheticOracle {
        SyntheticOracle::quadratic_bowl(MixtureWeights::normalize(&[1.0, 2.0, 3.0]).unwrap())
            .with_noise(0.01, 3)
            .unwrap()
    }

    #[test]
    fn hit_skips_inner() {
        let dir = tempfile::tempdir().unwrap();
        let c = Cached::open(oracle(), &dir.path().join("c.txt")).unwrap();
        let w = MixtureWeights::normalize(&[1.0, 1.0, 2.0]).unwrap();
        let a = c.evaluate(&w).unwrap();
        assert_eq!(c.inner_calls(), 1);
        assert_eq!(c.evaluate(&w).unwrap(), a);
        assert_eq!(c.inner_calls(), 1);
    }

    #[test]
    fn rounding_merges_close_weights() {
        let dir = tempfile::tempdir().unwrap();
        let c = Cached::open(oracle(), &dir.path().join("c.txt")).unwrap();
        let a = MixtureWeights::new(vec![0.25, 0.25, 0.5]).unwrap();
        let b = MixtureWeights::new(vec![0.25 + 3e-14, 0.25, 0.5 - 3e-14]).unwrap();
        assert_ne!(a, b);
        assert_eq!(canonical_key(&a), canonical_key(&b));
        c.evaluate(&a).unwrap();
        c.evaluate(&b).unwrap();
        assert_eq!(c.inner_calls(), 1);
    }

    #[test]
    fn reload_replays_entries() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.txt");
        let prior = DirichletPrior::from_token_totals(&[1, 2, 3], 3.0).unwrap();
        let pool = sample_pool(&prior, 100, 0.0, 12).unwrap().candidates;
        let first: Vec<f64> = {
            let c = Cached::open(oracle(), &path).unwrap();
            pool.iter().map(|w| c.evaluate(w).unwrap()).collect()
        };
        let c = Cached::open(oracle(), &path).unwrap();
        assert_eq!(c.len(), 100);
        let again: Vec<f64> = pool.iter().map(|w| c.evaluate(w).unwrap()).collect();
        assert_eq!(c.inner_calls(), 0);
        assert_eq!(again, first);
    }

    #[test]
    fn corrupt_lines_are_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.txt");
        let w = MixtureWeights::new(vec![0.5, 0.25, 0.25]).unwrap();
        {
            let c = Cached::open(oracle(), &path).unwrap();
            c.evaluate(&w).unwrap();
        }
        let mut text = std::fs::read_to_string(&path).unwrap();
        text.push_str("garbage line\n0000000000000000 0.1,0.9 0.5\n");
        std::fs::write(&path, text).unwrap();
        let c = Cached::open(oracle(), &path).unwrap();
        assert_eq!(c.len(), 1);
        c.evaluate(&w).unwrap();
        assert_eq!(c.inner_calls(), 0);
    }

    #[test]
    fn extensionally_equal_to_inner() {
        let dir = tempfile::tempdir().unwrap();
        let c = Cached::open(oracle(), &dir.path().join("c.txt")).unwrap();
        let prior = DirichletPrior::from_token_totals(&[5, 1, 1], 1.0).unwrap();
        for w in sample_pool(&prior, 50, 0.02, 1).unwrap().candidates {
            assert_eq!(c.evaluate(&w).unwrap(), oracle().evaluate(&w).unwrap());
        }
    }
}
