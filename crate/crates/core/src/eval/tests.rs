#![allow(clippy::needless_range_loop)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use tempfile::tempdir;

use super::*;
use crate::mat::Mat;

fn rng(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

fn table_from(words: &[&str], rows: Vec<Vec<f64>>) -> EmbeddingTable {
    let d = rows[0].len();
    let data: Vec<f64> = rows.into_iter().flatten().collect();
    EmbeddingTable::new(
        "test",
        words.iter().map(|w| w.to_string()).collect(),
        Mat::from_vec(data.len() / d, d, data),
    )
    .unwrap()
}

/// Independent oracle: fractional ranks by pairwise counting, then Pearson.
fn spearman_oracle(xs: &[f64], ys: &[f64]) -> f64 {
    let rank = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .map(|&x| {
                let below = v.iter().filter(|&&o| o < x).count() as f64;
                let equal = v.iter().filter(|&&o| o == x).count() as f64;
                below + (equal + 1.0) / 2.0
            })
            .collect()
    };
    let rx = rank(xs);
    let ry = rank(ys);
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my) * (b - my)).sum();
    cov / (vx * vy).sqrt()
}

#[test]
fn spearman_monotone_function_scores_one() {
    let xs: [f64; 5] = [0.4, 1.7, -2.0, 0.9, 3.3];
    let ys: Vec<f64> = xs.iter().map(|x| x.exp() + 5.0).collect();
    assert_eq!(spearman(&xs, &ys).unwrap(), 1.0);
}

#[test]
fn spearman_hand_computed_example() {
    let rho = spearman(&[1.0, 2.0, 3.0], &[3.0, 1.0, 2.0]).unwrap();
    assert!((rho + 0.5).abs() < 1e-12);
}

#[test]
fn spearman_fractional_ranks_for_ties() {
    let rho = spearman(&[1.0, 1.0, 2.0], &[1.0, 2.0, 3.0]).unwrap();
    assert!((rho - 1.5 / 3.0f64.sqrt()).abs() < 1e-12);
}

#[test]
fn spearman_rejects_degenerate_input() {
    assert!(matches!(
        spearman(&[1.0, 2.0], &[1.0]),
        Err(EvalError::LengthMismatch { .. })
    ));
    assert!(matches!(
        spearman(&[1.0], &[1.0]),
        Err(EvalError::TooFewPoints { .. })
    ));
    assert!(matches!(
        spearman(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]),
        Err(EvalError::ConstantInput)
    ));
}

#[test]
fn spearman_invariant_under_strictly_increasing_maps() {
    let mut r = rng(70);
    for _ in 0..50 {
        let n = r.random_range(3..20);
        let xs: Vec<f64> = (0..n).map(|_| r.random_range(-5.0..5.0)).collect();
        let ys: Vec<f64> = (0..n).map(|_| r.random_range(-5.0..5.0)).collect();
        let fx: Vec<f64> = xs.iter().map(|x| x.powi(3) + 2.0 * x).collect();
        let gy: Vec<f64> = ys.iter().map(|y| y.exp()).collect();
        let (Ok(a), Ok(b)) = (spearman(&xs, &ys), spearman(&fx, &gy)) else {
            panic!("unexpected degenerate input");
        };
        assert_eq!(a.to_bits(), b.to_bits(), "ranks must be identical");
    }
}

#[test]
fn spearman_matches_counting_oracle_with_ties() {
    let mut r = rng(71);
    for _ in 0..200 {
        let n = r.random_range(3..30);
        // Draw from a small integer lattice so ties actually happen.
        let xs: Vec<f64> = (0..n).map(|_| r.random_range(0..6) as f64).collect();
        let ys: Vec<f64> = (0..n).map(|_| r.random_range(0..6) as f64).collect();
        match spearman(&xs, &ys) {
            Ok(rho) => {
                let oracle = spearman_oracle(&xs, &ys);
                assert!(
                    (rho - oracle).abs() < 1e-12,
                    "{rho} vs oracle {oracle} on {xs:?} / {ys:?}"
                );
            }
            Err(EvalError::ConstantInput) => {
                let constant = xs.iter().all(|&v| v == xs[0]) || ys.iter().all(|&v| v == ys[0]);
                assert!(constant);
            }
            Err(e) => panic!("unexpected error {e}"),
        }
    }
}

fn write_benchmark(dir: &tempfile::TempDir, name: &str, content: &str) -> std::path::PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, content).unwrap();
    path
}

#[test]
fn benchmark_load_with_tags_and_comments() {
    let dir = tempdir().unwrap();
    let path = write_benchmark(
        &dir,
        "toy.tsv",
        "# comment line\ncat\tdog\t7.5\tNouns,Conc-q4\nrun\twalk\t6.0\tVerbs\nidea\tthought\t8.1\n",
    );
    let bench = SimilarityBenchmark::load(&path).unwrap();
    assert_eq!(bench.name(), "toy");
    assert_eq!(bench.rows().len(), 3);
    assert!(bench.tag_set().contains("Nouns"));
    assert!(bench.tag_set().contains("Verbs"));
    assert_eq!(bench.rows()[2].tags.len(), 0);
}

#[test]
fn benchmark_sidecar_tags_are_merged() {
    let dir = tempdir().unwrap();
    let path = write_benchmark(&dir, "side.tsv", "cat\tdog\t7.5\nrun\twalk\t6.0\n");
    std::fs::write(dir.path().join("side.tags"), "cat\tdog\tNouns,Hard\n").unwrap();
    let bench = SimilarityBenchmark::load(&path).unwrap();
    assert_eq!(bench.rows()[0].tags, vec!["Nouns", "Hard"]);
    assert!(bench.rows()[1].tags.is_empty());
}

fn four_word_table() -> EmbeddingTable {
    table_from(
        &["a", "b", "c", "d"],
        vec![
            vec![1.0, 0.0, 0.1],
            vec![0.9, 0.1, 0.0],
            vec![0.0, 1.0, 0.2],
            vec![0.1, 0.9, 0.4],
        ],
    )
}

#[test]
fn eval_similarity_skips_oov_pairs_and_counts_them() {
    let table = four_word_table();
    let rows = vec![
        BenchRow {
            word1: "a".into(),
            word2: "b".into(),
            gold: 9.0,
            tags: vec![],
        },
        BenchRow {
            word1: "a".into(),
            word2: "c".into(),
            gold: 2.0,
            tags: vec![],
        },
        BenchRow {
            word1: "a".into(),
            word2: "zzz".into(),
            gold: 5.0,
            tags: vec![],
        },
    ];
    let bench = SimilarityBenchmark::new("toy", rows).unwrap();
    let score = eval_similarity(&table, &bench).unwrap();
    assert_eq!(score.covered, 2);
    assert_eq!(score.skipped, 1);
    assert_eq!(score.rho, 1.0);
}

#[test]
fn eval_similarity_needs_two_covered_pairs() {
    let table = four_word_table();
    let rows = vec![
        BenchRow {
            word1: "a".into(),
            word2: "zzz".into(),
            gold: 1.0,
            tags: vec![],
        },
        BenchRow {
            word1: "b".into(),
            word2: "yyy".into(),
            gold: 2.0,
            tags: vec![],
        },
    ];
    let bench = SimilarityBenchmark::new("sparse", rows).unwrap();
    assert!(matches!(
        eval_similarity(&table, &bench),
        Err(EvalError::InsufficientCoverage { covered: 0, .. })
    ));
}

#[test]
fn eval_similarity_is_invariant_under_uniform_rescaling() {
    let mut r = rng(72);
    let words: Vec<String> = (0..10).map(|i| format!("w{i}")).collect();
    let word_refs: Vec<&str> = words.iter().map(String::as_str).collect();
    let rows: Vec<Vec<f64>> = (0..10)
        .map(|_| (0..6).map(|_| r.random_range(-1.0..1.0)).collect())
        .collect();
    let scaled: Vec<Vec<f64>> = rows
        .iter()
        .map(|row| row.iter().map(|v| 3.7 * v).collect())
        .collect();
    let bench_rows: Vec<BenchRow> = (0..9)
        .map(|i| BenchRow {
            word1: format!("w{i}"),
            word2: format!("w{}", i + 1),
            gold: r.random_range(0.0..10.0),
            tags: vec![],
        })
        .collect();
    let bench = SimilarityBenchmark::new("scale", bench_rows).unwrap();
    let a = eval_similarity(&table_from(&word_refs, rows), &bench).unwrap();
    let b = eval_similarity(&table_from(&word_refs, scaled), &bench).unwrap();
    assert_eq!(a.rho.to_bits(), b.rho.to_bits());
}

#[test]
fn subsets_cover_tags_and_report_not_evaluable() {
    let table = four_word_table();
    let rows = vec![
        BenchRow {
            word1: "a".into(),
            word2: "b".into(),
            gold: 9.0,
            tags: vec!["Nouns".into()],
        },
        BenchRow {
            word1: "a".into(),
            word2: "c".into(),
            gold: 2.0,
            tags: vec!["Nouns".into()],
        },
        BenchRow {
            word1: "b".into(),
            word2: "d".into(),
            gold: 4.0,
            tags: vec!["Verbs".into()],
        },
    ];
    let bench = SimilarityBenchmark::new("toy", rows).unwrap();
    let subsets = eval_subsets(&table, &bench, None).unwrap();
    assert!(matches!(subsets["Nouns"], SubsetScore::Scored(_)));
    assert!(matches!(
        subsets["Verbs"],
        SubsetScore::NotEvaluable { covered: 1 }
    ));
    assert!(matches!(
        eval_subsets(&table, &bench, Some(&["Mystery".to_string()])),
        Err(EvalError::UnknownTag { .. })
    ));
}

#[test]
fn subset_equal_to_whole_benchmark_matches_overall_rho() {
    let table = four_word_table();
    let rows: Vec<BenchRow> = [("a", "b", 9.0), ("a", "c", 2.0), ("c", "d", 7.0)]
        .iter()
        .map(|(w1, w2, g)| BenchRow {
            word1: w1.to_string(),
            word2: w2.to_string(),
            gold: *g,
            tags: vec!["All".into()],
        })
        .collect();
    let bench = SimilarityBenchmark::new("toy", rows).unwrap();
    let overall = eval_similarity(&table, &bench).unwrap();
    let subsets = eval_subsets(&table, &bench, None).unwrap();
    match &subsets["All"] {
        SubsetScore::Scored(s) => assert_eq!(s.rho.to_bits(), overall.rho.to_bits()),
        other => panic!("expected scored subset, got {other:?}"),
    }
}

#[test]
fn neighbors_tie_break_follows_vocab_order() {
    let table = table_from(
        &["q", "x", "y", "z"],
        vec![
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0, 0.0],
            vec![0.0, 0.0, 0.0, 1.0],
        ],
    );
    let out = nearest_neighbors(&table, "q", 3, true).unwrap();
    let names: Vec<&str> = out.iter().map(|(w, _)| w.as_str()).collect();
    assert_eq!(names, vec!["x", "y", "z"]);
    assert!(out.iter().all(|(_, c)| *c == 0.0));
}

#[test]
fn duplicate_row_ranks_first_with_cosine_one() {
    let table = table_from(
        &["q", "twin", "other"],
        vec![vec![0.3, 0.7], vec![0.3, 0.7], vec![-0.5, 0.2]],
    );
    let out = nearest_neighbors(&table, "q", 2, true).unwrap();
    assert_eq!(out[0].0, "twin");
    assert_eq!(out[0].1, 1.0);
}

#[test]
fn neighbors_match_exhaustive_sort_oracle() {
    let mut r = rng(73);
    let rows: Vec<Vec<f64>> = (0..5)
        .map(|_| (0..4).map(|_| r.random_range(-1.0..1.0)).collect())
        .collect();
    let table = table_from(&["v", "w", "x", "y", "z"], rows.clone());
    let got = nearest_neighbors(&table, "v", 3, true).unwrap();

    let mut oracle: Vec<(usize, f64)> = (1..5)
        .map(|i| {
            let mut dot = 0.0;
            let mut nq = 0.0;
            let mut ni = 0.0;
            for j in 0..4 {
                dot += rows[0][j] * rows[i][j];
                nq += rows[0][j] * rows[0][j];
                ni += rows[i][j] * rows[i][j];
            }
            (i, dot / (nq.sqrt() * ni.sqrt()))
        })
        .collect();
    oracle.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
    for (g, o) in got.iter().zip(&oracle) {
        assert_eq!(g.0, table.word(o.0));
        assert!((g.1 - o.1).abs() < 1e-12);
    }
}

#[test]
fn neighbors_full_depth_is_a_total_order() {
    let mut r = rng(74);
    let rows: Vec<Vec<f64>> = (0..6)
        .map(|_| (0..3).map(|_| r.random_range(-1.0..1.0)).collect())
        .collect();
    let table = table_from(&["a", "b", "c", "d", "e", "f"], rows);
    let out = nearest_neighbors(&table, "a", 5, true).unwrap();
    assert_eq!(out.len(), 5);
    assert!(out.windows(2).all(|w| w[0].1 >= w[1].1));
}

#[test]
fn neighbor_diff_identical_tables_is_empty_and_swapping_swaps() {
    let table = four_word_table();
    let diff = neighbor_diff(&table, &table, "a", 2).unwrap();
    assert!(diff.only_in_a.is_empty() && diff.only_in_b.is_empty());

    // Replace one row in b; at most the affected entries differ.
    let altered = table_from(
        &["a", "b", "c", "d"],
        vec![
            vec![1.0, 0.0, 0.1],
            vec![-1.0, 0.0, -0.1],
            vec![0.0, 1.0, 0.2],
            vec![0.1, 0.9, 0.4],
        ],
    );
    let d1 = neighbor_diff(&table, &altered, "a", 2).unwrap();
    assert!(d1.only_in_a.len() <= 1 && d1.only_in_b.len() <= 1);
    let d2 = neighbor_diff(&altered, &table, "a", 2).unwrap();
    let names = |v: &[(String, f64)]| v.iter().map(|(w, _)| w.clone()).collect::<Vec<_>>();
    assert_eq!(names(&d1.only_in_a), names(&d2.only_in_b));
    assert_eq!(names(&d1.only_in_b), names(&d2.only_in_a));

    assert!(matches!(
        neighbor_diff(&table, &altered, "zzz", 2),
        Err(EvalError::OovQuery { .. })
    ));
}

#[test]
fn constructed_synonym_shift_appears_in_diff() {
    // In table B the word "syn" moves next to the query.
    let a = table_from(
        &["q", "syn", "filler1", "filler2"],
        vec![
            vec![1.0, 0.0],
            vec![-1.0, 0.0],
            vec![0.9, 0.1],
            vec![0.8, 0.3],
        ],
    );
    let b = table_from(
        &["q", "syn", "filler1", "filler2"],
        vec![
            vec![1.0, 0.0],
            vec![0.99, 0.01],
            vec![-0.9, 0.1],
            vec![0.8, 0.3],
        ],
    );
    let diff = neighbor_diff(&a, &b, "q", 2).unwrap();
    assert!(diff.only_in_b.iter().any(|(w, _)| w == "syn"));
}

fn random_table(v: usize, d: usize, seed: u64) -> EmbeddingTable {
    let mut r = rng(seed);
    let names: Vec<String> = (0..v).map(|i| format!("w{i:04}")).collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let rows: Vec<Vec<f64>> = (0..v)
        .map(|_| (0..d).map(|_| r.random_range(-1.0..1.0)).collect())
        .collect();
    table_from(&refs, rows)
}

#[test]
fn concreteness_recovers_a_linear_target() {
    let table = random_table(120, 6, 75);
    let mut r = rng(76);
    let w: Vec<f64> = (0..6).map(|_| r.random_range(-1.0..1.0)).collect();
    let rows: Vec<(String, f64)> = (0..120)
        .map(|i| {
            let x = table.row(i);
            let y: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + 3.0;
            (table.word(i).to_string(), y)
        })
        .collect();
    let ratings = ConcretenessRatings::new(rows).unwrap();
    let cv = concreteness_cv(&table, &ratings, 10, 1e-3, 0).unwrap();
    assert!(cv.mean_rho > 0.99, "mean rho {}", cv.mean_rho);
    assert_eq!(cv.used, 120);
    assert_eq!(cv.skipped, 0);
}

#[test]
fn concreteness_null_case_stays_near_zero() {
    let table = random_table(500, 8, 77);
    let mut r = rng(0);
    let rows: Vec<(String, f64)> = (0..500)
        .map(|i| (table.word(i).to_string(), r.random_range(0.0..5.0)))
        .collect();
    let ratings = ConcretenessRatings::new(rows).unwrap();
    let cv = concreteness_cv(&table, &ratings, 10, 1e-3, 0).unwrap();
    assert!(cv.mean_rho.abs() < 0.2, "mean rho {}", cv.mean_rho);
}

#[test]
fn fold_assignment_partitions_evenly() {
    let folds = 10;
    let assignment = fold_assignment(105, folds, 9);
    assert_eq!(assignment.len(), 105);
    let mut sizes = vec![0usize; folds];
    for &f in &assignment {
        assert!(f < folds);
        sizes[f] += 1;
    }
    let min = *sizes.iter().min().unwrap();
    let max = *sizes.iter().max().unwrap();
    assert!(max - min <= 1, "sizes {sizes:?}");
    assert_eq!(sizes.iter().sum::<usize>(), 105);
}

#[test]
fn concreteness_is_deterministic_and_order_independent() {
    let table = random_table(60, 5, 78);
    let mut r = rng(79);
    let mut rows: Vec<(String, f64)> = (0..60)
        .map(|i| (table.word(i).to_string(), r.random_range(0.0..5.0)))
        .collect();
    let forward = ConcretenessRatings::new(rows.clone()).unwrap();
    rows.reverse();
    let reversed = ConcretenessRatings::new(rows).unwrap();

    let a = concreteness_cv(&table, &forward, 5, 1e-3, 42).unwrap();
    let b = concreteness_cv(&table, &forward, 5, 1e-3, 42).unwrap();
    let c = concreteness_cv(&table, &reversed, 5, 1e-3, 42).unwrap();
    assert_eq!(a.mean_rho.to_bits(), b.mean_rho.to_bits());
    assert_eq!(a.mean_rho.to_bits(), c.mean_rho.to_bits());
    for (x, y) in a.fold_rhos.iter().zip(&c.fold_rhos) {
        assert_eq!(x.to_bits(), y.to_bits());
    }
}

#[test]
fn concreteness_floors_lambda_on_singular_systems() {
    // Duplicate feature columns make X^T X singular at lambda = 0.
    let names: Vec<String> = (0..24).map(|i| format!("w{i}")).collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let mut r = rng(80);
    let rows: Vec<Vec<f64>> = (0..24)
        .map(|_| {
            let v: f64 = r.random_range(-1.0..1.0);
            vec![v, v, v]
        })
        .collect();
    let table = table_from(&refs, rows);
    let ratings = ConcretenessRatings::new(
        (0..24)
            .map(|i| (format!("w{i}"), r.random_range(0.0..5.0)))
            .collect(),
    )
    .unwrap();
    let cv = concreteness_cv(&table, &ratings, 4, 0.0, 1).unwrap();
    assert!(cv.lambda_floored);
}

#[test]
fn concreteness_rejects_duplicates_and_thin_data() {
    assert!(matches!(
        ConcretenessRatings::new(vec![("cat".into(), 1.0), ("cat".into(), 2.0)]),
        Err(EvalError::DuplicateRating { .. })
    ));
    let table = four_word_table();
    let ratings = ConcretenessRatings::new(vec![("a".into(), 1.0), ("b".into(), 2.0)]).unwrap();
    assert!(matches!(
        concreteness_cv(&table, &ratings, 10, 1e-3, 0),
        Err(EvalError::InsufficientData { .. })
    ));
}

#[test]
fn evaluate_table_aggregates_and_reports_failures() {
    let table = four_word_table();
    let good = SimilarityBenchmark::new(
        "good",
        vec![
            BenchRow {
                word1: "a".into(),
                word2: "b".into(),
                gold: 9.0,
                tags: vec![],
            },
            BenchRow {
                word1: "a".into(),
                word2: "c".into(),
                gold: 2.0,
                tags: vec![],
            },
            BenchRow {
                word1: "b".into(),
                word2: "d".into(),
                gold: 4.0,
                tags: vec![],
            },
        ],
    )
    .unwrap();
    let uncovered = SimilarityBenchmark::new(
        "uncovered",
        vec![
            BenchRow {
                word1: "xx".into(),
                word2: "yy".into(),
                gold: 1.0,
                tags: vec![],
            },
            BenchRow {
                word1: "yy".into(),
                word2: "zz".into(),
                gold: 2.0,
                tags: vec![],
            },
        ],
    )
    .unwrap();
    let report = evaluate_table(&table, &[good, uncovered]);
    assert_eq!(report.results.len(), 1);
    assert_eq!(report.failures.len(), 1);
    assert_eq!(report.failures[0].0, "uncovered");
    assert!(report.mean_rho().is_some());
    let records = report.records();
    assert!(records.contains("good"));
    assert!(records.contains("<mean>"));
    assert!(report.human_table().contains("Mean"));
}

#[test]
fn display_follows_the_times_100_convention() {
    assert_eq!(display_x100(0.805), "80.5");
    assert_eq!(display_x100(-0.0512), "-5.1");
}
