#![allow(clippy::needless_range_loop)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use tempfile::tempdir;

use super::*;
use crate::embed::EmbeddingTable;
use crate::mat::Mat;
use crate::model::{AlignConfig, EncoderConfig, EncoderKind};

fn rng(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

fn toy_table(v: usize, d: usize, seed: u64) -> EmbeddingTable {
    let mut r = rng(seed);
    EmbeddingTable::new(
        "toy",
        (0..v).map(|i| format!("w{i}")).collect(),
        Mat::from_vec(
            v,
            d,
            (0..v * d).map(|_| r.random_range(-1.0..1.0)).collect(),
        ),
    )
    .unwrap()
}

fn tokens(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}

fn toy_train_config(kind: EncoderKind) -> TrainConfig {
    let mut encoder = EncoderConfig::new(kind);
    encoder.hidden = 6;
    encoder.heads = 2;
    encoder.ff_dim = Some(8);
    TrainConfig {
        batch_size: 16,
        lr: 0.01,
        epochs: 5,
        patience: 3,
        vocab_top_k: 100,
        grounded_dim: 4,
        align: AlignConfig::default(),
        encoder,
        seed: 0,
    }
}

/// Synthetic corpus whose image vectors are an exact linear function of the
/// caption-mean textual vector, plus optional noise.
fn synthetic_corpus(
    table: &EmbeddingTable,
    n: usize,
    image_dim: usize,
    noise: f64,
    seed: u64,
) -> Vec<(Vec<String>, Vec<f64>, String)> {
    let mut r = rng(seed);
    let d = table.dim();
    let a = Mat::from_vec(
        d,
        image_dim,
        (0..d * image_dim)
            .map(|_| r.random_range(-1.0..1.0))
            .collect(),
    );
    (0..n)
        .map(|i| {
            let len = r.random_range(3..8);
            let words: Vec<String> = (0..len)
                .map(|_| table.word(r.random_range(0..table.len())).to_string())
                .collect();
            let mut mean = vec![0.0; d];
            for w in &words {
                for (j, v) in table.lookup(w).unwrap().iter().enumerate() {
                    mean[j] += v / len as f64;
                }
            }
            let mut img = vec![0.0; image_dim];
            for (j, item) in img.iter_mut().enumerate() {
                for (k, m) in mean.iter().enumerate() {
                    *item += m * a.get(k, j);
                }
                if noise > 0.0 {
                    // Box-Muller keeps the generator dependency-free.
                    let u1: f64 = r.random_range(1e-12..1.0);
                    let u2: f64 = r.random_range(0.0..1.0);
                    *item +=
                        noise * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
                }
            }
            (words, img, format!("img{i}"))
        })
        .collect()
}

#[test]
fn load_dataset_pairs_every_caption_with_its_image() {
    let dir = tempdir().unwrap();
    let vectors = dir.path().join("imgs.vec");
    std::fs::write(&vectors, "2 3\nimg1 1 2 3\nimg2 4 5 6\n").unwrap();
    let captions = dir.path().join("caps.tsv");
    let mut lines = String::new();
    for i in 0..5 {
        lines.push_str(&format!("img1\tA dog caption number {i}.\n"));
        lines.push_str(&format!("img2\tA cat caption number {i}.\n"));
    }
    std::fs::write(&captions, lines).unwrap();

    let report = load_dataset(
        &captions,
        &vectors,
        &DatasetOptions {
            vocab_top_k: 100,
            val_fraction: 0.0,
        },
    )
    .unwrap();
    assert_eq!(report.train.len() + report.val.len(), 10);
    assert_eq!(report.train.image_dim(), 3);
    assert_eq!(report.dropped_empty, 0);
}

#[test]
fn load_dataset_drops_captions_emptied_by_vocab_filter() {
    let dir = tempdir().unwrap();
    let vectors = dir.path().join("imgs.vec");
    std::fs::write(&vectors, "1 2\nimg1 1 2\n").unwrap();
    let captions = dir.path().join("caps.tsv");
    // "zebra" appears once and the vocabulary keeps only the top 2 tokens.
    std::fs::write(
        &captions,
        "img1\tdog dog dog cat cat\nimg1\tdog cat\nimg1\tzebra\n",
    )
    .unwrap();
    let report = load_dataset(
        &captions,
        &vectors,
        &DatasetOptions {
            vocab_top_k: 2,
            val_fraction: 0.0,
        },
    )
    .unwrap();
    assert_eq!(report.vocab, vec!["dog", "cat"]);
    assert_eq!(report.dropped_empty, 1);
    assert_eq!(report.train.len(), 2);
}

#[test]
fn load_dataset_rejects_bad_dims_and_unknown_ids() {
    let dir = tempdir().unwrap();
    let vectors = dir.path().join("imgs.vec");
    std::fs::write(&vectors, "2 3\nimg1 1 2 3\nimg2 1 2\n").unwrap();
    let captions = dir.path().join("caps.tsv");
    std::fs::write(&captions, "img1\ta dog\n").unwrap();
    match load_dataset(&captions, &vectors, &DatasetOptions::default()) {
        Err(TrainError::DimInconsistent {
            id,
            expected: 3,
            got: 2,
        }) => assert_eq!(id, "img2"),
        other => panic!("expected dim error, got {other:?}"),
    }

    std::fs::write(&vectors, "1 3\nimg1 1 2 3\n").unwrap();
    std::fs::write(&captions, "img9\ta dog\n").unwrap();
    match load_dataset(&captions, &vectors, &DatasetOptions::default()) {
        Err(TrainError::UnresolvedImageId { id, line: 1 }) => assert_eq!(id, "img9"),
        other => panic!("expected unresolved id, got {other:?}"),
    }
}

#[test]
fn load_dataset_honors_split_tags_and_ratio() {
    let dir = tempdir().unwrap();
    let vectors = dir.path().join("imgs.vec");
    std::fs::write(&vectors, "2 2\nimg1 1 2\nimg2 3 4\n").unwrap();
    let captions = dir.path().join("caps.tsv");
    std::fs::write(
        &captions,
        "img1\ta dog runs\ttrain\nimg2\ta cat sits\tval\n",
    )
    .unwrap();
    let report = load_dataset(
        &captions,
        &vectors,
        &DatasetOptions {
            vocab_top_k: 100,
            val_fraction: 0.0,
        },
    )
    .unwrap();
    assert_eq!(report.train.len(), 1);
    assert_eq!(report.val.len(), 1);
    assert_eq!(report.val.pairs()[0].image_id, "img2");

    // Ratio split keeps all captions of one image on the same side.
    std::fs::write(
        &captions,
        "img1\ta dog runs\nimg2\ta cat sits\nimg1\tthe dog rests\n",
    )
    .unwrap();
    let report = load_dataset(
        &captions,
        &vectors,
        &DatasetOptions {
            vocab_top_k: 100,
            val_fraction: 0.5,
        },
    )
    .unwrap();
    assert_eq!(report.train.len(), 2);
    assert_eq!(report.val.len(), 1);
    assert!(report.train.pairs().iter().all(|p| p.image_id == "img1"));
}

#[test]
fn single_pair_lstm_memorizes_its_target() {
    let table = toy_table(4, 5, 50);
    let corpus = synthetic_corpus(&table, 1, 3, 0.0, 51);
    let train_set = GroundingDataset::from_parts(Split::Train, corpus).unwrap();
    // No validation pairs: early stopping is off, the loop runs to the end.
    let mut config = toy_train_config(EncoderKind::Lstm);
    config.epochs = 200;
    config.patience = 200;
    config.lr = 0.05;
    let val = empty_val(&train_set);
    let out = train(&config, &train_set, &val, &table).unwrap();
    assert!(!out.diverged);
    let final_mse = out.history.last().unwrap().train_mse;
    assert!(final_mse < 1e-3, "final train mse {final_mse}");
}

fn empty_val(train_set: &GroundingDataset) -> GroundingDataset {
    GroundingDataset::empty(Split::Val, train_set.image_dim())
}

#[test]
fn bow_recovers_linear_structure_on_synthetic_corpus() {
    let table = toy_table(20, 8, 52);
    let corpus = synthetic_corpus(&table, 300, 6, 0.01, 53);
    let train_set = GroundingDataset::from_parts(Split::Train, corpus[..260].to_vec()).unwrap();
    let val_set = GroundingDataset::from_parts(Split::Val, corpus[260..].to_vec()).unwrap();
    let mut config = toy_train_config(EncoderKind::BagOfWords);
    config.encoder.hidden = 10;
    config.grounded_dim = 6;
    config.epochs = 20;
    config.patience = 20;
    config.batch_size = 32;
    config.lr = 0.01;
    let out = train(&config, &train_set, &val_set, &table).unwrap();
    let first = out.history.first().unwrap().val_mse.unwrap();
    let best = out
        .history
        .iter()
        .filter_map(|r| r.val_mse)
        .fold(f64::INFINITY, f64::min);
    assert!(
        best < 0.2 * first,
        "validation mse {best} vs first epoch {first}"
    );
}

#[test]
fn early_stopper_contract() {
    let mut s = EarlyStopper::new(3, true);
    assert_eq!(s.observe(1, Some(1.0)), StopDecision::Improved);
    assert_eq!(s.observe(2, Some(1.1)), StopDecision::NoImprovement);
    assert_eq!(s.observe(3, Some(1.2)), StopDecision::NoImprovement);
    assert_eq!(s.observe(4, Some(1.3)), StopDecision::Halt);
    assert_eq!(s.best_epoch(), 1);

    // Equal loss is not an improvement.
    let mut s = EarlyStopper::new(1, true);
    s.observe(1, Some(0.5));
    assert_eq!(s.observe(2, Some(0.5)), StopDecision::Halt);

    // Disabled stopper treats every epoch as best.
    let mut s = EarlyStopper::new(2, false);
    for e in 1..=10 {
        assert_eq!(s.observe(e, None), StopDecision::Improved);
    }
    assert_eq!(s.best_epoch(), 10);
}

#[test]
fn adversarial_validation_halts_at_best_plus_patience() {
    // Train and validation captions are identical but the validation target
    // is the negated train target: fitting one walks away from the other.
    let table = toy_table(4, 5, 54);
    let corpus = synthetic_corpus(&table, 1, 3, 0.0, 55);
    let train_set = GroundingDataset::from_parts(Split::Train, corpus.clone()).unwrap();
    let flipped: Vec<_> = corpus
        .iter()
        .map(|(t, img, id)| {
            (
                t.clone(),
                img.iter().map(|v| -v * 50.0).collect(),
                id.clone(),
            )
        })
        .collect();
    let val_set = GroundingDataset::from_parts(Split::Val, flipped).unwrap();

    let mut config = toy_train_config(EncoderKind::Lstm);
    config.epochs = 30;
    config.patience = 4;
    config.lr = 0.05;
    let out = train(&config, &train_set, &val_set, &table).unwrap();

    let vals: Vec<f64> = out.history.iter().map(|r| r.val_mse.unwrap()).collect();
    let best = vals
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .unwrap()
        .0
        + 1;
    assert_eq!(out.best_epoch, best);
    assert_eq!(out.history.len(), out.best_epoch + config.patience);
    assert!(out.history.len() < config.epochs, "should halt early");

    // The returned parameters are the best-epoch ones: re-evaluating the
    // validation pair reproduces the best validation loss, not the last.
    let va = val_set.pairs();
    let pred = out
        .model
        .predict_image(
            &va[0].tokens.iter().map(String::as_str).collect::<Vec<_>>(),
            &table,
        )
        .unwrap();
    let target = val_set.image(&va[0]);
    let mse: f64 = pred
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / pred.len() as f64;
    let best_val = vals[out.best_epoch - 1];
    assert!((mse - best_val).abs() < 1e-9, "{mse} vs {best_val}");
}

#[test]
fn source_table_is_frozen_through_training() {
    let table = toy_table(6, 5, 56);
    let before: Vec<u8> = table
        .vectors()
        .data()
        .iter()
        .flat_map(|v| v.to_le_bytes())
        .collect();
    let corpus = synthetic_corpus(&table, 12, 3, 0.0, 57);
    let train_set = GroundingDataset::from_parts(Split::Train, corpus[..10].to_vec()).unwrap();
    let val_set = GroundingDataset::from_parts(Split::Val, corpus[10..].to_vec()).unwrap();
    let config = toy_train_config(EncoderKind::Gru);
    train(&config, &train_set, &val_set, &table).unwrap();
    let after: Vec<u8> = table
        .vectors()
        .data()
        .iter()
        .flat_map(|v| v.to_le_bytes())
        .collect();
    assert_eq!(before, after);
}

#[test]
fn training_is_deterministic_for_a_fixed_seed() {
    let table = toy_table(8, 5, 58);
    let corpus = synthetic_corpus(&table, 20, 3, 0.01, 59);
    let train_set = GroundingDataset::from_parts(Split::Train, corpus[..16].to_vec()).unwrap();
    let val_set = GroundingDataset::from_parts(Split::Val, corpus[16..].to_vec()).unwrap();
    let config = toy_train_config(EncoderKind::Lstm);

    let a = train(&config, &train_set, &val_set, &table).unwrap();
    let b = train(&config, &train_set, &val_set, &table).unwrap();
    for (ra, rb) in a.history.iter().zip(&b.history) {
        assert_eq!(ra.train_mse.to_bits(), rb.train_mse.to_bits());
        assert_eq!(ra.val_mse.map(f64::to_bits), rb.val_mse.map(f64::to_bits));
    }
    for ((_, ma), (_, mb)) in a.model.blocks().iter().zip(b.model.blocks().iter()) {
        assert_eq!(ma.data(), mb.data());
    }

    // A different seed moves the numbers.
    let mut other = config.clone();
    other.seed = 1;
    let c = train(&other, &train_set, &val_set, &table).unwrap();
    assert_ne!(
        a.history[0].train_mse.to_bits(),
        c.history[0].train_mse.to_bits()
    );
}

#[test]
fn divergent_training_aborts_with_last_good_parameters() {
    let table = toy_table(6, 5, 60);
    let corpus = synthetic_corpus(&table, 8, 3, 0.0, 61);
    let train_set = GroundingDataset::from_parts(Split::Train, corpus.clone()).unwrap();
    let val_set = empty_val(&train_set);
    let mut config = toy_train_config(EncoderKind::Lstm);
    config.lr = 1e155;
    config.epochs = 3;
    config.patience = 3;
    let out = train(&config, &train_set, &val_set, &table).unwrap();
    assert!(out.diverged);
    for (_, m) in out.model.blocks() {
        assert!(m.is_finite());
    }
}

#[test]
fn wl_extracts_content_word_samples() {
    let mut words: Vec<String> = vec!["dog".into(), "floor".into(), "cat".into()];
    let mut r = rng(62);
    let data: Vec<f64> = (0..3 * 4).map(|_| r.random_range(-1.0..1.0)).collect();
    words.sort();
    let table = EmbeddingTable::new("toy", words, Mat::from_vec(3, 4, data)).unwrap();

    let triples = vec![
        (
            tokens("there is a dog on the floor"),
            vec![1.0, 2.0, 0.5, -1.0, 0.3, 0.9],
            "i1".into(),
        ),
        (
            tokens("it is on the of"),
            vec![0.4, -0.2, 1.5, 0.7, -0.9, 0.1],
            "i2".into(),
        ),
        (
            tokens("a cat"),
            vec![-0.5, 0.8, -1.2, 0.2, 0.6, -0.4],
            "i3".into(),
        ),
    ];
    let train_set = GroundingDataset::from_parts(Split::Train, triples).unwrap();
    let val_set = empty_val(&train_set);
    let mut config = toy_train_config(EncoderKind::WordLevel);
    config.grounded_dim = 2;
    config.epochs = 2;
    config.patience = 2;
    let out = train_wl(&config, &train_set, &val_set, &table).unwrap();
    // Caption 1 contributes dog + floor, caption 2 nothing, caption 3 cat.
    assert_eq!(out.dropped_captions, 1);
    assert_eq!(out.pca.output_dim(), 2);
    assert_eq!(out.align.output_dim(), 2);
    assert_eq!(out.align.input_dim(), 4);

    // The extracted samples themselves: each content word paired with its
    // caption's reduced image vector.
    let samples = super::trainer::wl_samples(&train_set, &table, &out.pca).unwrap();
    assert_eq!(samples.rows.len(), 3);
    assert_eq!(samples.rows[0], table.lookup("dog").unwrap());
    assert_eq!(samples.rows[1], table.lookup("floor").unwrap());
    assert_eq!(samples.rows[2], table.lookup("cat").unwrap());
    let dog_target = out
        .pca
        .apply(train_set.image(&train_set.pairs()[0]))
        .unwrap();
    assert_eq!(samples.targets[0], dog_target);
    assert_eq!(samples.targets[1], dog_target, "floor shares dog's image");
    assert_eq!(samples.dropped_captions, 1);
}

#[test]
fn wl_pca_rank_must_be_attainable() {
    let table = toy_table(3, 4, 63);
    let triples = vec![
        (tokens("w0 w1"), vec![1.0, 2.0, 3.0], "i1".into()),
        (tokens("w1 w2"), vec![2.0, 1.0, 0.0], "i2".into()),
    ];
    let train_set = GroundingDataset::from_parts(Split::Train, triples).unwrap();
    let val_set = empty_val(&train_set);
    let mut config = toy_train_config(EncoderKind::WordLevel);
    // Two images support one component at most; asking for 3 must fail.
    config.grounded_dim = 3;
    assert!(train_wl(&config, &train_set, &val_set, &table).is_err());
}

#[test]
fn word_level_kind_is_rejected_by_the_sequence_trainer() {
    let table = toy_table(3, 5, 64);
    let corpus = synthetic_corpus(&table, 2, 3, 0.0, 65);
    let train_set = GroundingDataset::from_parts(Split::Train, corpus).unwrap();
    let val_set = empty_val(&train_set);
    let config = toy_train_config(EncoderKind::WordLevel);
    assert!(matches!(
        train(&config, &train_set, &val_set, &table),
        Err(TrainError::BadConfig { .. })
    ));
}

#[test]
fn config_validation_catches_bad_values() {
    let mut c = toy_train_config(EncoderKind::Lstm);
    c.patience = 10;
    c.epochs = 5;
    assert!(c.validate().is_err());
    c = toy_train_config(EncoderKind::Lstm);
    c.batch_size = 0;
    assert!(c.validate().is_err());
}
