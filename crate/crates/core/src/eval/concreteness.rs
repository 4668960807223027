//! Concreteness probe: ridge regression from embeddings to ratings,
//! scored by Spearman correlation under k-fold cross validation.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use super::{spearman, EvalError};
use crate::embed::EmbeddingTable;
use crate::mat::{cholesky_solve, Mat, MatError};

#[derive(Clone, Debug)]
pub struct ConcretenessRatings {
    words: Vec<String>,
    ratings: Vec<f64>,
}

impl ConcretenessRatings {
    pub fn new(rows: Vec<(String, f64)>) -> Result<Self, EvalError> {
        let mut seen = HashSet::new();
        let mut words = Vec::with_capacity(rows.len());
        let mut ratings = Vec::with_capacity(rows.len());
        for (word, rating) in rows {
            if !rating.is_finite() {
                return Err(EvalError::Parse {
                    path: "<ratings>".into(),
                    line: 0,
                    msg: format!("non-finite rating for '{word}'"),
                });
            }
            if !seen.insert(word.clone()) {
                return Err(EvalError::DuplicateRating { word });
            }
            words.push(word);
            ratings.push(rating);
        }
        Ok(Self { words, ratings })
    }

    /// `word<TAB>rating` lines, `#` for comments.
    pub fn load(path: &Path) -> Result<Self, EvalError> {
        let content = fs::read_to_string(path).map_err(|source| EvalError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut rows = Vec::new();
        for (lineno, line) in content.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((word, rating)) = line.split_once('\t') else {
                return Err(EvalError::Parse {
                    path: path.display().to_string(),
                    line: lineno + 1,
                    msg: "expected word<TAB>rating".into(),
                });
            };
            let rating: f64 = rating.trim().parse().map_err(|_| EvalError::Parse {
                path: path.display().to_string(),
                line: lineno + 1,
                msg: format!("bad rating '{rating}'"),
            })?;
            rows.push((word.trim().to_string(), rating));
        }
        Self::new(rows)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.words
            .iter()
            .map(String::as_str)
            .zip(self.ratings.iter().copied())
    }
}

/// Deterministic fold ids for `n` items: a seeded shuffle of `0..n` dealt
/// round-robin, so fold sizes differ by at most one. The caller is expected
/// to present items in a canonical order (sorted), which makes the
/// assignment independent of input file order.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut fold = vec![0usize; n];
    for (pos, &item) in order.iter().enumerate() {
        fold[item] = pos % folds;
    }
    fold
}

#[derive(Clone, Debug)]
pub struct ConcretenessCv {
    pub mean_rho: f64,
    pub fold_rhos: Vec<f64>,
    /// Rated words found in the table.
    pub used: usize,
    /// Rated words missing from the table.
    pub skipped: usize,
    /// True when a singular system forced the 1e-6 ridge floor.
    pub lambda_floored: bool,
}

/// Ridge-regularized least squares from embedding to rating, trained and
/// scored on `folds` disjoint held-out folds; returns the mean Spearman
/// correlation across folds.
pub fn concreteness_cv(
    table: &EmbeddingTable,
    ratings: &ConcretenessRatings,
    folds: usize,
    lambda: f64,
    seed: u64,
) -> Result<ConcretenessCv, EvalError> {
    if folds < 2 {
        return Err(EvalError::TooFewPoints { got: folds });
    }
    // Covered words in sorted order, so file order cannot matter.
    let mut covered: Vec<(&str, f64, usize)> = ratings
        .iter()
        .filter_map(|(w, r)| table.position(w).map(|i| (w, r, i)))
        .collect();
    let skipped = ratings.len() - covered.len();
    covered.sort_by(|a, b| a.0.cmp(b.0));
    if covered.len() < folds {
        return Err(EvalError::InsufficientData {
            needed: folds,
            got: covered.len(),
        });
    }

    let fold_of = fold_assignment(covered.len(), folds, seed);
    let d = table.dim();
    let mut fold_rhos = Vec::with_capacity(folds);
    let mut lambda_floored = false;

    for f in 0..folds {
        let train: Vec<usize> = (0..covered.len()).filter(|i| fold_of[*i] != f).collect();
        let test: Vec<usize> = (0..covered.len()).filter(|i| fold_of[*i] == f).collect();

        // Center features and target on the training fold.
        let mut mean_x = vec![0.0; d];
        let mut mean_y = 0.0;
        for &i in &train {
            let row = table.row(covered[i].2);
            for (j, m) in mean_x.iter_mut().enumerate() {
                *m += row[j];
            }
            mean_y += covered[i].1;
        }
        let nt = train.len() as f64;
        for m in &mut mean_x {
            *m /= nt;
        }
        mean_y /= nt;

        // Normal equations on centered data.
        let mut xtx = Mat::zeros(d, d);
        let mut xty = vec![0.0; d];
        for &i in &train {
            let row = table.row(covered[i].2);
            let y = covered[i].1 - mean_y;
            for a in 0..d {
                let xa = row[a] - mean_x[a];
                xty[a] += xa * y;
                for b in a..d {
                    let v = xtx.get(a, b) + xa * (row[b] - mean_x[b]);
                    xtx.set(a, b, v);
                }
            }
        }
        for a in 0..d {
            for b in a..d {
                let v = xtx.get(a, b);
                xtx.set(b, a, v);
            }
        }

        let solve_with = |lam: f64| -> Result<Vec<f64>, MatError> {
            let mut system = xtx.clone();
            for a in 0..d {
                let v = system.get(a, a) + lam;
                system.set(a, a, v);
            }
            cholesky_solve(&system, &xty)
        };
        let weights = match solve_with(lambda) {
            Ok(w) => w,
            Err(_) => {
                lambda_floored = true;
                solve_with(lambda.max(1e-6)).map_err(|_| EvalError::Singular)?
            }
        };

        let mut preds = Vec::with_capacity(test.len());
        let mut golds = Vec::with_capacity(test.len());
        for &i in &test {
            let row = table.row(covered[i].2);
            let mut p = mean_y;
            for a in 0..d {
                p += (row[a] - mean_x[a]) * weights[a];
            }
            preds.push(p);
            golds.push(covered[i].1);
        }
        fold_rhos.push(spearman(&preds, &golds)?);
    }

    Ok(ConcretenessCv {
        mean_rho: fold_rhos.iter().sum::<f64>() / folds as f64,
        fold_rhos,
        used: covered.len(),
        skipped,
        lambda_floored,
    })
}
