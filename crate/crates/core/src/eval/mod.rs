//! Word-similarity benchmarks, nearest-neighbor retrieval, and the
//! concreteness probe.
//!
//! Out-of-vocabulary policy everywhere: skip the affected row and count it,
//! never substitute a stand-in vector. Coverage is part of every score.

mod benchmark;
mod concreteness;
mod neighbors;
mod spearman;

pub use benchmark::{
    eval_similarity, eval_subsets, BenchRow, SimilarityBenchmark, SimilarityScore, SubsetScore,
};
pub use concreteness::{concreteness_cv, fold_assignment, ConcretenessCv, ConcretenessRatings};
pub use neighbors::{nearest_neighbors, neighbor_diff, NeighborDiff};
pub use spearman::spearman;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::embed::{EmbedError, EmbeddingTable};
use crate::mat::MatError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("input lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("correlation needs at least 2 points, got {got}")]
    TooFewPoints { got: usize },
    #[error("correlation is undefined for constant input")]
    ConstantInput,
    #[error("benchmark '{benchmark}' covers only {covered} pairs; at least 2 needed")]
    InsufficientCoverage { benchmark: String, covered: usize },
    #[error("tag '{tag}' is not declared by this benchmark")]
    UnknownTag { tag: String },
    #[error("query word '{word}' not in table '{table}'")]
    OovQuery { word: String, table: String },
    #[error("duplicate word '{word}' in ratings")]
    DuplicateRating { word: String },
    #[error("need at least {needed} rated in-vocabulary words, found {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("ridge system is singular even with the ridge floor")]
    Singular,
    #[error("{0}")]
    Embed(#[from] EmbedError),
    #[error("{0}")]
    Mat(#[from] MatError),
}

/// Scores formatted the conventional way: rho times 100, one decimal.
pub fn display_x100(rho: f64) -> String {
    format!("{:.1}", rho * 100.0)
}

#[derive(Clone, Debug)]
pub struct BenchmarkResult {
    pub name: String,
    pub score: SimilarityScore,
    pub subsets: BTreeMap<String, SubsetScore>,
}

/// Per-benchmark scores for one embedding table, plus benchmarks that could
/// not be evaluated and why.
#[derive(Clone, Debug)]
pub struct EvalReport {
    pub table_name: String,
    pub results: Vec<BenchmarkResult>,
    pub failures: Vec<(String, String)>,
}

impl EvalReport {
    /// Mean rho over the benchmarks that were actually evaluated.
    pub fn mean_rho(&self) -> Option<f64> {
        if self.results.is_empty() {
            return None;
        }
        Some(self.results.iter().map(|r| r.score.rho).sum::<f64>() / self.results.len() as f64)
    }

    /// Machine-readable line records (tab-separated, `#` header).
    pub fn records(&self) -> String {
        let mut out = String::new();
        out.push_str("# table\tbenchmark\ttag\trho\trho_x100\tcovered\tskipped\n");
        for r in &self.results {
            let _ = writeln!(
                out,
                "{}\t{}\t-\t{:.6}\t{}\t{}\t{}",
                self.table_name,
                r.name,
                r.score.rho,
                display_x100(r.score.rho),
                r.score.covered,
                r.score.skipped
            );
            for (tag, sub) in &r.subsets {
                match sub {
                    SubsetScore::Scored(s) => {
                        let _ = writeln!(
                            out,
                            "{}\t{}\t{}\t{:.6}\t{}\t{}\t{}",
                            self.table_name,
                            r.name,
                            tag,
                            s.rho,
                            display_x100(s.rho),
                            s.covered,
                            s.skipped
                        );
                    }
                    SubsetScore::NotEvaluable { covered } => {
                        let _ = writeln!(
                            out,
                            "{}\t{}\t{}\tnot-evaluable\t-\t{}\t-",
                            self.table_name, r.name, tag, covered
                        );
                    }
                }
            }
        }
        if let Some(mean) = self.mean_rho() {
            let _ = writeln!(
                out,
                "{}\t<mean>\t-\t{:.6}\t{}\t-\t-",
                self.table_name,
                mean,
                display_x100(mean)
            );
        }
        for (name, why) in &self.failures {
            let _ = writeln!(
                out,
                "{}\t{}\t-\tfailed\t{}\t-\t-",
                self.table_name, name, why
            );
        }
        out
    }

    /// Human-readable table in the benchmarks-as-columns layout.
    pub fn human_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "table: {}", self.table_name);
        let mut header = String::from("benchmark");
        let mut row = String::from("rho_x100 ");
        for r in &self.results {
            let _ = write!(header, "\t{}", r.name);
            let _ = write!(row, "\t{}", display_x100(r.score.rho));
        }
        if let Some(mean) = self.mean_rho() {
            let _ = write!(header, "\tMean");
            let _ = write!(row, "\t{}", display_x100(mean));
        }
        let _ = writeln!(out, "{header}");
        let _ = writeln!(out, "{row}");
        for r in &self.results {
            if r.subsets.is_empty() {
                continue;
            }
            let _ = writeln!(out, "subsets of {}:", r.name);
            for (tag, sub) in &r.subsets {
                match sub {
                    SubsetScore::Scored(s) => {
                        let _ = writeln!(
                            out,
                            "  {tag}\t{}\t({}/{} pairs)",
                            display_x100(s.rho),
                            s.covered,
                            s.covered + s.skipped
                        );
                    }
                    SubsetScore::NotEvaluable { covered } => {
                        let _ = writeln!(out, "  {tag}\tnot evaluable ({covered} covered)");
                    }
                }
            }
        }
        for (name, why) in &self.failures {
            let _ = writeln!(out, "failed: {name}: {why}");
        }
        out
    }
}

/// Runs every benchmark against one table, with per-tag subset scores where
/// the benchmark carries tags. Benchmarks that cannot be scored are recorded
/// as failures rather than aborting the others.
pub fn evaluate_table(table: &EmbeddingTable, benchmarks: &[SimilarityBenchmark]) -> EvalReport {
    let mut results = Vec::new();
    let mut failures = Vec::new();
    for bench in benchmarks {
        match eval_similarity(table, bench) {
            Ok(score) => {
                let subsets = if bench.tag_set().is_empty() {
                    BTreeMap::new()
                } else {
                    eval_subsets(table, bench, None).unwrap_or_default()
                };
                results.push(BenchmarkResult {
                    name: bench.name().to_string(),
                    score,
                    subsets,
                });
            }
            Err(e) => failures.push((bench.name().to_string(), e.to_string())),
        }
    }
    EvalReport {
        table_name: table.name().to_string(),
        results,
        failures,
    }
}

#[cfg(test)]
mod tests;
