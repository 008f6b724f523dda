use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::EmbeddingMatrix;
use crate::{Error, Result};

pub const MAX_SCORE: f64 = 5.0;

/// One of the four per-document quality ratings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    OverallQuality,
    EducationalValue,
    InformationalValue,
    Advertisement,
}

impl Axis {
    pub const ALL: [Axis; 4] = [
        Axis::OverallQuality,
        Axis::EducationalValue,
        Axis::InformationalValue,
        Axis::Advertisement,
    ];

    pub fn index(self) -> usize {
        match self {
            Axis::OverallQuality => 0,
            Axis::EducationalValue => 1,
            Axis::InformationalValue => 2,
            Axis::Advertisement => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Axis::OverallQuality => "overall_quality",
            Axis::EducationalValue => "educational_value",
            Axis::InformationalValue => "informational_value",
            Axis::Advertisement => "advertisement",
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "overall_quality" | "overall" => Ok(Axis::OverallQuality),
            "educational_value" | "educational" => Ok(Axis::EducationalValue),
            "informational_value" | "informational" => Ok(Axis::InformationalValue),
            "advertisement" => Ok(Axis::Advertisement),
            other => Err(Error::InvalidArgument(format!("unknown quality axis {other:?}"))),
        }
    }
}

pub type AxisScores = [f64; 4];

/// Per-document quality ratings keyed by doc id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QualityScores {
    scores: HashMap<String, AxisScores>,
}

impl QualityScores {
    pub fn new(records: impl IntoIterator<Item = (String, AxisScores)>) -> Result<Self> {
        let mut scores = HashMap::new();
        for (id, s) in records {
            if let Some(v) = s.iter().find(|v| !(0.0..=MAX_SCORE).contains(*v)) {
                return Err(Error::Data(format!(
                    "document {id}: score {v} outside [0, {MAX_SCORE}]"
                )));
            }
            if scores.insert(id.clone(), s).is_some() {
                return Err(Error::Data(format!("duplicate score record for {id}")));
            }
        }
        Ok(QualityScores { scores })
    }

    pub fn get(&self, doc_id: &str) -> Option<&AxisScores> {
        self.scores.get(doc_id)
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Checks there is exactly one record per document in `emb`.
    pub fn check_covers(&self, emb: &EmbeddingMatrix) -> Result<()> {
        if let Some(missing) = emb.doc_ids().iter().find(|id| !self.scores.contains_key(*id)) {
            return Err(Error::Data(format!("no quality scores for document {missing}")));
        }
        if self.scores.len() != emb.len() {
            return Err(Error::Data(format!(
                "{} score records for {} documents",
                self.scores.len(),
                emb.len()
            )));
        }
        Ok(())
    }

    /// Reads `doc_id<TAB>overall<TAB>educational<TAB>informational<TAB>advertisement` lines.
    pub fn read_file(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::file(path, e))?;
        let mut records = Vec::new();
        for (lineno, line) in BufReader::new(f).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = || Error::Data(format!("{}:{}: malformed score record", path.display(), lineno + 1));
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 5 {
                return Err(bad());
            }
            let mut s = [0.0; 4];
            for (slot, field) in s.iter_mut().zip(&fields[1..]) {
                *slot = field.trim().parse().map_err(|_| bad())?;
            }
            records.push((fields[0].to_string(), s));
        }
        Self::new(records)
    }

    /// Writes records in the order of `doc_ids`.
    pub fn write_file(&self, path: &Path, doc_ids: &[String]) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::file(path, e))?;
        let mut w = BufWriter::new(f);
        for id in doc_ids {
            let s = self
                .get(id)
                .ok_or_else(|| Error::Data(format!("no quality scores for document {id}")))?;
            writeln!(w, "{id}\t{}\t{}\t{}\t{}", s[0], s[1], s[2], s[3])?;
        }
        w.flush()?;
        Ok(())
    }
}
