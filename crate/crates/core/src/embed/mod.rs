//! Loading, saving, and querying word-embedding tables.
//!
//! The interchange format is UTF-8 text: an optional `V d` header line, then
//! one `word f1 f2 ... fd` line per word with single-space separators. Words
//! may not contain spaces. Floats are written with 17 significant digits so a
//! save/load round trip reproduces every value.

mod pca;

pub use pca::{pca_fit, PcaProjection};

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::mat::Mat;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: expected {expected} values, found {got}")]
    RaggedRow {
        path: String,
        line: usize,
        expected: usize,
        got: usize,
    },
    #[error("{path}:{line}: cannot parse '{token}' as a number")]
    BadNumber {
        path: String,
        line: usize,
        token: String,
    },
    #[error("embedding dimension {got} does not match expected {expected}")]
    DimMismatch { expected: usize, got: usize },
    #[error("embedding table is empty")]
    EmptyTable,
    #[error("duplicate word '{word}' in table construction")]
    DuplicateWord { word: String },
    #[error("word '{word}' not found in table '{table}'")]
    NotFound { word: String, table: String },
    #[error("vector contains a non-finite value")]
    NonFinite,
    #[error("cosine is undefined for a zero vector")]
    ZeroVector,
    #[error("vector lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("PCA needs at least 2 samples, got {got}")]
    TooFewSamples { got: usize },
    #[error("PCA rank {requested} out of range, max is {max}")]
    RankOutOfRange { requested: usize, max: usize },
    #[error("data supports at most {achievable} principal components, {requested} requested")]
    RankDeficient { requested: usize, achievable: usize },
    #[error("{path}: malformed projection file at line {line}")]
    BadProjection { path: String, line: usize },
}

fn io_err(path: &Path, source: io::Error) -> EmbedError {
    EmbedError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// An ordered vocabulary with one dense row vector per word.
///
/// Immutable after construction; lookups are exact string matches with no
/// case folding (case policy belongs to caption preprocessing, not here).
#[derive(Clone, Debug)]
pub struct EmbeddingTable {
    name: String,
    words: Vec<String>,
    index: HashMap<String, usize>,
    vectors: Mat,
}

impl EmbeddingTable {
    pub fn new(
        name: impl Into<String>,
        words: Vec<String>,
        vectors: Mat,
    ) -> Result<Self, EmbedError> {
        if words.is_empty() || vectors.cols() == 0 {
            return Err(EmbedError::EmptyTable);
        }
        assert_eq!(words.len(), vectors.rows(), "one row per word");
        if !vectors.is_finite() {
            return Err(EmbedError::NonFinite);
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(EmbedError::DuplicateWord { word: w.clone() });
            }
        }
        Ok(Self {
            name: name.into(),
            words,
            index,
            vectors,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn word(&self, i: usize) -> &str {
        &self.words[i]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.vectors.row(i)
    }

    pub fn vectors(&self) -> &Mat {
        &self.vectors
    }

    /// Exact-match lookup; `None` signals out-of-vocabulary so callers can
    /// decide between skipping and failing.
    pub fn lookup(&self, word: &str) -> Option<&[f64]> {
        self.index.get(word).map(|&i| self.vectors.row(i))
    }

    pub fn position(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn require(&self, word: &str) -> Result<&[f64], EmbedError> {
        self.lookup(word).ok_or_else(|| EmbedError::NotFound {
            word: word.to_string(),
            table: self.name.clone(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), EmbedError> {
        let mut out = String::new();
        let _ = writeln!(out, "{} {}", self.len(), self.dim());
        for (i, word) in self.words.iter().enumerate() {
            out.push_str(word);
            for v in self.vectors.row(i) {
                let _ = write!(out, " {}", format_float(*v));
            }
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| io_err(path, e))
    }
}

/// 17 significant digits: enough for an exact f64 round trip through text.
pub(crate) fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// An [`EmbeddingTable`] plus what the loader had to clean up.
#[derive(Debug)]
pub struct LoadedTable {
    pub table: EmbeddingTable,
    /// Lines skipped because their word was already present; first wins.
    pub duplicates: usize,
}

/// Reads a table in the text vector format, auto-detecting the optional
/// `V d` header. Duplicate words keep their first occurrence and are
/// counted. `expected_dim` cross-checks the file against a known dimension.
pub fn load_embeddings(
    path: &Path,
    expected_dim: Option<usize>,
) -> Result<LoadedTable, EmbedError> {
    let content = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "embeddings".to_string());
    let pstr = path.display().to_string();

    let mut words: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut data: Vec<f64> = Vec::new();
    let mut dim: Option<usize> = None;
    let mut duplicates = 0usize;

    for (lineno, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let word = fields.next().expect("non-empty line has a first field");
        let values: Vec<&str> = fields.collect();

        // Header detection: a first line of exactly two integer tokens.
        if words.is_empty() && dim.is_none() && values.len() == 1 {
            if let (Ok(_), Ok(d)) = (word.parse::<usize>(), values[0].parse::<usize>()) {
                if d >= 1 {
                    dim = Some(d);
                    continue;
                }
            }
        }

        let row_dim = values.len();
        if row_dim == 0 {
            return Err(EmbedError::RaggedRow {
                path: pstr,
                line: lineno + 1,
                expected: dim.unwrap_or(1),
                got: 0,
            });
        }
        match dim {
            None => dim = Some(row_dim),
            Some(d) if d != row_dim => {
                return Err(EmbedError::RaggedRow {
                    path: pstr,
                    line: lineno + 1,
                    expected: d,
                    got: row_dim,
                });
            }
            _ => {}
        }

        if index.contains_key(word) {
            duplicates += 1;
            continue;
        }

        let mut row = Vec::with_capacity(row_dim);
        for tok in values {
            let v: f64 = tok.parse().map_err(|_| EmbedError::BadNumber {
                path: pstr.clone(),
                line: lineno + 1,
                token: tok.to_string(),
            })?;
            row.push(v);
        }
        index.insert(word.to_string(), words.len());
        words.push(word.to_string());
        data.extend_from_slice(&row);
    }

    let dim = dim.ok_or(EmbedError::EmptyTable)?;
    if words.is_empty() {
        return Err(EmbedError::EmptyTable);
    }
    if let Some(expected) = expected_dim {
        if expected != dim {
            return Err(EmbedError::DimMismatch { expected, got: dim });
        }
    }
    let table = EmbeddingTable::new(name, words, Mat::from_vec(data.len() / dim, dim, data))?;
    Ok(LoadedTable { table, duplicates })
}

/// Cosine similarity, clamped into [-1, 1] against rounding spill.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64, EmbedError> {
    if u.len() != v.len() {
        return Err(EmbedError::LengthMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    let mut dot = 0.0;
    let mut nu = 0.0;
    let mut nv = 0.0;
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return Err(EmbedError::ZeroVector);
    }
    // sqrt(nu * nv) rather than sqrt(nu) * sqrt(nv): keeps cosine(u, u) == 1
    // exactly, since sqrt(x * x) == x under IEEE rounding.
    Ok((dot / (nu * nv).sqrt()).clamp(-1.0, 1.0))
}
