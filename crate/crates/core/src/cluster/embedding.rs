use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::{Error, Result};

/// `b"MIXEMBED"` read as a little-endian u64.
pub const EMBEDDING_MAGIC: u64 = u64::from_le_bytes(*b"MIXEMBED");
pub const EMBEDDING_VERSION: u64 = 1;

/// Precomputed document embeddings with their ids and token counts.
///
/// Rows are stored densely in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    data: Vec<f64>,
    dim: usize,
    doc_ids: Vec<String>,
    token_counts: Vec<u64>,
}

impl EmbeddingMatrix {
    pub fn new(
        data: Vec<f64>,
        dim: usize,
        doc_ids: Vec<String>,
        token_counts: Vec<u64>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Data("embedding dimension must be at least 1".into()));
        }
        let n = doc_ids.len();
        if n == 0 {
            return Err(Error::Data("embedding matrix has no rows".into()));
        }
        if data.len() != n * dim {
            return Err(Error::Data(format!(
                "expected {} coordinates for {n} rows of dimension {dim}, got {}",
                n * dim,
                data.len()
            )));
        }
        if token_counts.len() != n {
            return Err(Error::Data(format!(
                "{n} doc ids but {} token counts",
                token_counts.len()
            )));
        }
        if let Some(i) = token_counts.iter().position(|&t| t == 0) {
            return Err(Error::Data(format!(
                "document {} has a zero token count",
                doc_ids[i]
            )));
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::Data(format!(
                "document {} has a non-finite coordinate",
                doc_ids[pos / dim]
            )));
        }
        let mut seen = HashSet::with_capacity(n);
        for id in &doc_ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::Data(format!("duplicate doc id {id}")));
            }
        }
        Ok(EmbeddingMatrix {
            data,
            dim,
            doc_ids,
            token_counts,
        })
    }

    /// Builds a matrix from per-row vectors.
    pub fn from_rows(rows: Vec<Vec<f64>>, doc_ids: Vec<String>, token_counts: Vec<u64>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != dim) {
            return Err(Error::Data(format!(
                "row {bad} has dimension {}, expected {dim}",
                rows[bad].len()
            )));
        }
        Self::new(rows.concat(), dim, doc_ids, token_counts)
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn token_counts(&self) -> &[u64] {
        &self.token_counts
    }

    pub fn total_tokens(&self) -> u64 {
        self.token_counts.iter().sum()
    }

    /// Scales every row to unit Euclidean norm.
    pub fn l2_normalize(&self) -> Result<EmbeddingMatrix> {
        let mut data = self.data.clone();
        for (i, row) in data.chunks_exact_mut(self.dim).enumerate() {
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(Error::Data(format!(
                    "document {} has a zero-norm embedding",
                    self.doc_ids[i]
                )));
            }
            row.iter_mut().for_each(|x| *x /= norm);
        }
        Ok(EmbeddingMatrix {
            data,
            dim: self.dim,
            doc_ids: self.doc_ids.clone(),
            token_counts: self.token_counts.clone(),
        })
    }

    /// Writes the binary matrix and its `doc_id<TAB>token_count` sidecar.
    ///
    /// Coordinates are stored as f32, so a round trip loses precision beyond that.
    pub fn write_files(&self, matrix: &Path, sidecar: &Path) -> Result<()> {
        let f = File::create(matrix).map_err(|e| Error::file(matrix, e))?;
        let mut w = BufWriter::new(f);
        for v in [
            EMBEDDING_MAGIC,
            EMBEDDING_VERSION,
            self.len() as u64,
            self.dim as u64,
        ] {
            w.write_all(&v.to_le_bytes())?;
        }
        for &x in &self.data {
            w.write_all(&(x as f32).to_le_bytes())?;
        }
        w.flush()?;

        let f = File::create(sidecar).map_err(|e| Error::file(sidecar, e))?;
        let mut w = BufWriter::new(f);
        for (id, t) in self.doc_ids.iter().zip(&self.token_counts) {
            writeln!(w, "{id}\t{t}")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_files(matrix: &Path, sidecar: &Path) -> Result<Self> {
        let f = File::open(matrix).map_err(|e| Error::file(matrix, e))?;
        let mut r = BufReader::new(f);
        let mut header = [0u64; 4];
        for h in header.iter_mut() {
            let mut buf = [0u8; 8];
            r.read_exact(&mut buf)
                .map_err(|_| Error::Data(format!("{}: truncated header", matrix.display())))?;
            *h = u64::from_le_bytes(buf);
        }
        let [magic, version, n, d] = header;
        if magic != EMBEDDING_MAGIC {
            return Err(Error::Data(format!("{}: bad magic", matrix.display())));
        }
        if version != EMBEDDING_VERSION {
            return Err(Error::Data(format!(
                "{}: unsupported version {version}",
                matrix.display()
            )));
        }
        let count = (n as usize)
            .checked_mul(d as usize)
            .ok_or_else(|| Error::Data("matrix size overflows".into()))?;
        let mut bytes = Vec::with_capacity(count * 4);
        r.read_to_end(&mut bytes)?;
        if bytes.len() != count * 4 {
            return Err(Error::Data(format!(
                "{}: expected {} bytes of coordinates, found {}",
                matrix.display(),
                count * 4,
                bytes.len()
            )));
        }
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();

        let (doc_ids, token_counts) = read_sidecar(sidecar)?;
        if doc_ids.len() as u64 != n {
            return Err(Error::Data(format!(
                "{} lists {} documents but the matrix has {n} rows",
                sidecar.display(),
                doc_ids.len()
            )));
        }
        Self::new(data, d as usize, doc_ids, token_counts)
    }
}

fn read_sidecar(path: &Path) -> Result<(Vec<String>, Vec<u64>)> {
    let f = File::open(path).map_err(|e| Error::file(path, e))?;
    let mut ids = Vec::new();
    let mut tokens = Vec::new();
    for (lineno, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        let (Some(id), Some(t), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::Data(format!(
                "{}:{}: expected `doc_id<TAB>token_count`",
                path.display(),
                lineno + 1
            )));
        };
        let t: u64 = t.trim().parse().map_err(|_| {
            Error::Data(format!(
                "{}:{}: bad token count {t:?}",
                path.display(),
                lineno + 1
            ))
        })?;
        ids.push(id.to_string());
        tokens.push(t);
    }
    Ok((ids, tokens))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn one(row: Vec<f64>) -> EmbeddingMatrix {
        EmbeddingMatrix::from_rows(vec![row], vec!["a".into()], vec![1]).unwrap()
    }

    #[test]
    fn l2_examples() {
        let m = one(vec![3.0, 4.0]).l2_normalize().unwrap();
        assert_abs_diff_eq!(m.row(0)[0], 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(m.row(0)[1], 0.8, epsilon = 1e-15);

        let m = one(vec![0.0, 1.0, 0.0]).l2_normalize().unwrap();
        assert_eq!(m.row(0), &[0.0, 1.0, 0.0]);

        let m = one(vec![1.0, 1.0]).l2_normalize().unwrap();
        let h = 1.0 / 2f64.sqrt();
        assert_abs_diff_eq!(m.row(0)[0], h, epsilon = 1e-15);
        assert_abs_diff_eq!(m.row(0)[1], h, epsilon = 1e-15);
    }

    #[test]
    fn zero_norm_names_document() {
        let m = EmbeddingMatrix::from_rows(
            vec![vec![1.0, 0.0], vec![0.0, 0.0]],
            vec!["ok".into(), "dead".into()],
            vec![1, 1],
        )
        .unwrap();
        let err = m.l2_normalize().unwrap_err().to_string();
        assert!(err.contains("dead"), "{err}");
    }

    #[test]
    fn rejects_invalid_matrices() {
        assert!(EmbeddingMatrix::from_rows(vec![vec![f64::NAN]], vec!["a".into()], vec![1]).is_err());
        assert!(EmbeddingMatrix::from_rows(vec![vec![1.0]], vec!["a".into()], vec![0]).is_err());
        assert!(EmbeddingMatrix::from_rows(
            vec![vec![1.0], vec![1.0, 2.0]],
            vec!["a".into(), "b".into()],
            vec![1, 1]
        )
        .is_err());
        assert!(EmbeddingMatrix::from_rows(
            vec![vec![1.0], vec![2.0]],
            vec!["a".into(), "a".into()],
            vec![1, 1]
        )
        .is_err());
        assert!(EmbeddingMatrix::from_rows(vec![], vec![], vec![]).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = EmbeddingMatrix::from_rows(
            vec![vec![0.5, -1.25, 3.0], vec![2.0, 0.0, -0.125]],
            vec!["x".into(), "y".into()],
            vec![10, 20],
        )
        .unwrap();
        let (bin, side) = (dir.path().join("e.bin"), dir.path().join("e.tsv"));
        m.write_files(&bin, &side).unwrap();
        let back = EmbeddingMatrix::read_files(&bin, &side).unwrap();
        assert_eq!(back, m);

        let bytes = std::fs::read(&bin).unwrap();
        assert_eq!(&bytes[..8], b"MIXEMBED");
        assert_eq!(bytes.len(), 32 + 6 * 4);
    }

    #[test]
    fn truncated_file_is_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let (bin, side) = (dir.path().join("e.bin"), dir.path().join("e.tsv"));
        one(vec![1.0, 2.0]).write_files(&bin, &side).unwrap();
        let bytes = std::fs::read(&bin).unwrap();
        std::fs::write(&bin, &bytes[..bytes.len() - 2]).unwrap();
        assert!(matches!(
            EmbeddingMatrix::read_files(&bin, &side),
            Err(Error::Data(_))
        ));
    }
}
