//! Nearest-neighbor retrieval by cosine and top-k list diffing.

use super::EvalError;
use crate::embed::{cosine, EmbeddingTable};

/// The `k` nearest words to `query` by descending cosine, ties broken by
/// vocabulary order. Zero-norm rows cannot be ranked and are left out.
pub fn nearest_neighbors(
    table: &EmbeddingTable,
    query: &str,
    k: usize,
    exclude_self: bool,
) -> Result<Vec<(String, f64)>, EvalError> {
    let qi = table.position(query).ok_or_else(|| EvalError::OovQuery {
        word: query.to_string(),
        table: table.name().to_string(),
    })?;
    let q = table.row(qi);
    if q.iter().all(|v| *v == 0.0) {
        return Err(EvalError::Embed(crate::embed::EmbedError::ZeroVector));
    }
    let mut scored: Vec<(usize, f64)> = Vec::with_capacity(table.len());
    for i in 0..table.len() {
        if exclude_self && i == qi {
            continue;
        }
        // A zero-norm row has no direction; it cannot be anyone's neighbor.
        if let Ok(c) = cosine(q, table.row(i)) {
            scored.push((i, c));
        }
    }
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .expect("finite cosines")
            .then(a.0.cmp(&b.0))
    });
    Ok(scored
        .into_iter()
        .take(k)
        .map(|(i, c)| (table.word(i).to_string(), c))
        .collect())
}

#[derive(Clone, Debug)]
pub struct NeighborDiff {
    pub only_in_a: Vec<(String, f64)>,
    pub only_in_b: Vec<(String, f64)>,
}

/// Set difference of the two top-k lists, order preserved from each source.
pub fn neighbor_diff(
    table_a: &EmbeddingTable,
    table_b: &EmbeddingTable,
    query: &str,
    k: usize,
) -> Result<NeighborDiff, EvalError> {
    let a = nearest_neighbors(table_a, query, k, true)?;
    let b = nearest_neighbors(table_b, query, k, true)?;
    let in_b: std::collections::HashSet<&str> = b.iter().map(|(w, _)| w.as_str()).collect();
    let in_a: std::collections::HashSet<&str> = a.iter().map(|(w, _)| w.as_str()).collect();
    Ok(NeighborDiff {
        only_in_a: a
            .iter()
            .filter(|(w, _)| !in_b.contains(w.as_str()))
            .cloned()
            .collect(),
        only_in_b: b
            .iter()
            .filter(|(w, _)| !in_a.contains(w.as_str()))
            .cloned()
            .collect(),
    })
}
