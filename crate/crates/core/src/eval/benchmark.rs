//! Similarity/relatedness benchmark files and their scoring.
//!
//! File format: `word1<TAB>word2<TAB>score[<TAB>tag1,tag2,...]`, `#` for
//! comments. A sidecar `<name>.tags` file with `word1<TAB>word2<TAB>tags`
//! lines can attach tags to a tag-less benchmark file.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use super::{spearman, EvalError};
use crate::embed::{cosine, EmbeddingTable};

#[derive(Clone, Debug)]
pub struct BenchRow {
    pub word1: String,
    pub word2: String,
    pub gold: f64,
    pub tags: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct SimilarityBenchmark {
    name: String,
    rows: Vec<BenchRow>,
    tag_set: BTreeSet<String>,
}

impl SimilarityBenchmark {
    pub fn new(name: impl Into<String>, rows: Vec<BenchRow>) -> Result<Self, EvalError> {
        let name = name.into();
        if rows.len() < 2 {
            return Err(EvalError::InsufficientCoverage {
                benchmark: name,
                covered: rows.len(),
            });
        }
        for row in &rows {
            if !row.gold.is_finite() {
                return Err(EvalError::Parse {
                    path: name.clone(),
                    line: 0,
                    msg: format!("non-finite score for ({}, {})", row.word1, row.word2),
                });
            }
        }
        let tag_set = rows.iter().flat_map(|r| r.tags.iter().cloned()).collect();
        Ok(Self {
            name,
            rows,
            tag_set,
        })
    }

    /// Loads a benchmark file; the name is the file stem. Tags come from the
    /// optional fourth column and from a `<stem>.tags` sidecar when present.
    pub fn load(path: &Path) -> Result<Self, EvalError> {
        let content = fs::read_to_string(path).map_err(|source| EvalError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "benchmark".into());
        let pstr = path.display().to_string();

        let mut rows = Vec::new();
        for (lineno, line) in content.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() < 3 || fields.len() > 4 {
                return Err(EvalError::Parse {
                    path: pstr.clone(),
                    line: lineno + 1,
                    msg: "expected word1<TAB>word2<TAB>score[<TAB>tags]".into(),
                });
            }
            let gold: f64 = fields[2].trim().parse().map_err(|_| EvalError::Parse {
                path: pstr.clone(),
                line: lineno + 1,
                msg: format!("bad score '{}'", fields[2]),
            })?;
            let tags = fields
                .get(3)
                .map(|t| {
                    t.split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(String::from)
                        .collect()
                })
                .unwrap_or_default();
            rows.push(BenchRow {
                word1: fields[0].trim().to_string(),
                word2: fields[1].trim().to_string(),
                gold,
                tags,
            });
        }

        let sidecar = path.with_extension("tags");
        if sidecar.exists() {
            let tag_text = fs::read_to_string(&sidecar).map_err(|source| EvalError::Io {
                path: sidecar.display().to_string(),
                source,
            })?;
            let mut by_pair: HashMap<(String, String), Vec<String>> = HashMap::new();
            for (lineno, line) in tag_text.lines().enumerate() {
                if line.trim().is_empty() || line.starts_with('#') {
                    continue;
                }
                let fields: Vec<&str> = line.split('\t').collect();
                if fields.len() != 3 {
                    return Err(EvalError::Parse {
                        path: sidecar.display().to_string(),
                        line: lineno + 1,
                        msg: "expected word1<TAB>word2<TAB>tags".into(),
                    });
                }
                by_pair.insert(
                    (fields[0].trim().to_string(), fields[1].trim().to_string()),
                    fields[2]
                        .split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(String::from)
                        .collect(),
                );
            }
            for row in &mut rows {
                if let Some(tags) = by_pair.get(&(row.word1.clone(), row.word2.clone())) {
                    for t in tags {
                        if !row.tags.contains(t) {
                            row.tags.push(t.clone());
                        }
                    }
                }
            }
        }

        Self::new(name, rows)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn rows(&self) -> &[BenchRow] {
        &self.rows
    }

    pub fn tag_set(&self) -> &BTreeSet<String> {
        &self.tag_set
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SimilarityScore {
    pub rho: f64,
    pub covered: usize,
    pub skipped: usize,
}

fn score_rows<'a, I>(table: &EmbeddingTable, rows: I) -> (Vec<f64>, Vec<f64>, usize)
where
    I: Iterator<Item = &'a BenchRow>,
{
    let mut model = Vec::new();
    let mut gold = Vec::new();
    let mut skipped = 0usize;
    for row in rows {
        match (table.lookup(&row.word1), table.lookup(&row.word2)) {
            (Some(u), Some(v)) => match cosine(u, v) {
                Ok(c) => {
                    model.push(c);
                    gold.push(row.gold);
                }
                Err(_) => skipped += 1,
            },
            _ => skipped += 1,
        }
    }
    (model, gold, skipped)
}

/// Spearman correlation between cosine similarities and gold scores over
/// the covered pairs. Pairs with either word out of vocabulary (or with a
/// zero vector) are skipped and counted.
pub fn eval_similarity(
    table: &EmbeddingTable,
    benchmark: &SimilarityBenchmark,
) -> Result<SimilarityScore, EvalError> {
    let (model, gold, skipped) = score_rows(table, benchmark.rows().iter());
    if model.len() < 2 {
        return Err(EvalError::InsufficientCoverage {
            benchmark: benchmark.name().to_string(),
            covered: model.len(),
        });
    }
    let rho = spearman(&model, &gold)?;
    Ok(SimilarityScore {
        rho,
        covered: model.len(),
        skipped,
    })
}

#[derive(Clone, Debug)]
pub enum SubsetScore {
    Scored(SimilarityScore),
    /// Fewer than 2 covered rows, or a degenerate correlation: reported as
    /// such rather than as a zero.
    NotEvaluable {
        covered: usize,
    },
}

/// Per-tag scores over the rows carrying each tag. `tags = None` evaluates
/// every declared tag; naming an undeclared tag is an error.
pub fn eval_subsets(
    table: &EmbeddingTable,
    benchmark: &SimilarityBenchmark,
    tags: Option<&[String]>,
) -> Result<BTreeMap<String, SubsetScore>, EvalError> {
    let selected: Vec<String> = match tags {
        Some(ts) => {
            for t in ts {
                if !benchmark.tag_set().contains(t) {
                    return Err(EvalError::UnknownTag { tag: t.clone() });
                }
            }
            ts.to_vec()
        }
        None => benchmark.tag_set().iter().cloned().collect(),
    };
    let mut out = BTreeMap::new();
    for tag in selected {
        let rows = benchmark.rows().iter().filter(|r| r.tags.contains(&tag));
        let (model, gold, skipped) = score_rows(table, rows);
        let score = if model.len() < 2 {
            SubsetScore::NotEvaluable {
                covered: model.len(),
            }
        } else {
            match spearman(&model, &gold) {
                Ok(rho) => SubsetScore::Scored(SimilarityScore {
                    rho,
                    covered: model.len(),
                    skipped,
                }),
                Err(_) => SubsetScore::NotEvaluable {
                    covered: model.len(),
                },
            }
        };
        out.insert(tag, score);
    }
    Ok(out)
}
