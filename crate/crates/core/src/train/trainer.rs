//! The training loops: batched epochs, NAdam updates, validation-driven
//! early stopping, divergence recovery.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use super::{is_stop_word, GroundingDataset, Nadam, TrainError};
use crate::embed::{pca_fit, EmbeddingTable, PcaProjection};
use crate::mat::Mat;
use crate::model::{
    AlignConfig, AlignmentMap, EncoderConfig, EncoderKind, GroundingModel, ModelConfig, ModelError,
    SequenceBatch,
};
use crate::tensor::{Tape, TensorError};

/// Distinct stream for epoch shuffling so it never aliases model init.
const SHUFFLE_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub epochs: usize,
    /// Consecutive non-improving validation epochs tolerated before halting.
    pub patience: usize,
    pub vocab_top_k: usize,
    pub grounded_dim: usize,
    pub align: AlignConfig,
    pub encoder: EncoderConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 256,
            lr: 0.001,
            epochs: 20,
            patience: 5,
            vocab_top_k: 10_000,
            grounded_dim: 1024,
            align: AlignConfig::default(),
            encoder: EncoderConfig::new(EncoderKind::Lstm),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |msg: &str| {
            Err(TrainError::BadConfig {
                msg: msg.to_string(),
            })
        };
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return bad("lr must be finite and non-negative");
        }
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if self.patience == 0 {
            return bad("patience must be positive");
        }
        if self.patience > self.epochs {
            return bad("patience cannot exceed epochs");
        }
        if self.vocab_top_k == 0 {
            return bad("vocab_top_k must be positive");
        }
        if self.grounded_dim == 0 {
            return bad("grounded_dim must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: Option<f64>,
    /// Wall-clock seconds; informational only, excluded from any
    /// determinism guarantee.
    pub seconds: f64,
}

#[derive(Debug, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    NoImprovement,
    Halt,
}

/// Tracks the best validation loss and halts after `patience` consecutive
/// epochs without improvement. With no validation metric every epoch counts
/// as best and nothing ever halts.
#[derive(Debug)]
pub struct EarlyStopper {
    patience: usize,
    enabled: bool,
    best: f64,
    best_epoch: usize,
    bad_streak: usize,
}

impl EarlyStopper {
    pub fn new(patience: usize, enabled: bool) -> Self {
        Self {
            patience,
            enabled,
            best: f64::INFINITY,
            best_epoch: 0,
            bad_streak: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, val: Option<f64>) -> StopDecision {
        let v = match (self.enabled, val) {
            (true, Some(v)) => v,
            _ => {
                self.best_epoch = epoch;
                return StopDecision::Improved;
            }
        };
        if v < self.best {
            self.best = v;
            self.best_epoch = epoch;
            self.bad_streak = 0;
            StopDecision::Improved
        } else {
            self.bad_streak += 1;
            if self.bad_streak >= self.patience {
                StopDecision::Halt
            } else {
                StopDecision::NoImprovement
            }
        }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub model: GroundingModel,
    pub history: Vec<EpochRecord>,
    /// 1-based epoch whose parameters the returned model carries.
    pub best_epoch: usize,
    /// True when a non-finite loss or gradient aborted training; the model
    /// holds the last good parameters.
    pub diverged: bool,
    /// Caption tokens absent from the source embedding table.
    pub skipped_tokens: usize,
    /// Pairs dropped because every token was absent from the table.
    pub dropped_pairs: usize,
}

#[derive(Debug)]
pub struct WlOutcome {
    pub align: AlignmentMap,
    pub pca: PcaProjection,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub diverged: bool,
    pub skipped_tokens: usize,
    /// Captions that contributed no word-level samples.
    pub dropped_captions: usize,
}

/// Token rows and image targets resolved against the source table.
struct Vectorized<'a> {
    rows: Vec<Vec<&'a [f64]>>,
    targets: Vec<&'a [f64]>,
    skipped_tokens: usize,
    dropped_pairs: usize,
}

fn vectorize<'a>(set: &'a GroundingDataset, table: &'a EmbeddingTable) -> Vectorized<'a> {
    let mut out = Vectorized {
        rows: Vec::with_capacity(set.len()),
        targets: Vec::with_capacity(set.len()),
        skipped_tokens: 0,
        dropped_pairs: 0,
    };
    for pair in set.pairs() {
        let mut rows = Vec::with_capacity(pair.tokens.len());
        for token in &pair.tokens {
            match table.lookup(token) {
                Some(r) => rows.push(r),
                None => out.skipped_tokens += 1,
            }
        }
        if rows.is_empty() {
            out.dropped_pairs += 1;
            continue;
        }
        out.rows.push(rows);
        out.targets.push(set.image(pair));
    }
    out
}

fn is_divergence(err: &TrainError) -> bool {
    matches!(
        err,
        TrainError::NonFiniteGrad { .. }
            | TrainError::Tensor(TensorError::NonFinite { .. })
            | TrainError::Model(ModelError::Tensor(TensorError::NonFinite { .. }))
    )
}

fn snapshot_of(blocks: &[(String, &Mat)]) -> Vec<Mat> {
    blocks.iter().map(|(_, m)| (*m).clone()).collect()
}

fn restore_into(blocks: &mut [(String, &mut Mat)], snapshot: &[Mat]) {
    for ((_, dst), src) in blocks.iter_mut().zip(snapshot) {
        **dst = src.clone();
    }
}

/// One forward (and optionally backward) pass over the batch at `idx`.
fn model_batch_loss(
    model: &GroundingModel,
    data: &Vectorized<'_>,
    idx: &[usize],
    image_dim: usize,
    train: bool,
) -> Result<(f64, Option<Vec<Mat>>), TrainError> {
    let tape = Tape::new();
    let leaves = model.make_leaves(&tape, train)?;
    let rows: Vec<Vec<&[f64]>> = idx.iter().map(|&i| data.rows[i].clone()).collect();
    let batch = SequenceBatch::build(model.encoder.kind(), &rows);
    let pred = model.forward_tape(&tape, &leaves, &batch)?;
    let mut tvals = Vec::with_capacity(idx.len() * image_dim);
    for &i in idx {
        tvals.extend_from_slice(data.targets[i]);
    }
    let target = tape.constant(idx.len(), image_dim, tvals)?;
    let loss = pred.mse_loss(target)?;
    let value = loss.scalar_value()?;
    if !train {
        return Ok((value, None));
    }
    loss.backward()?;
    let grads = leaves
        .iter()
        .map(|l| l.grad_mat().expect("parameter leaf has a gradient"))
        .collect();
    Ok((value, Some(grads)))
}

/// Trains an encoder model end to end. The source table is read-only
/// throughout; only the alignment and encoder parameters move.
pub fn train(
    config: &TrainConfig,
    train_set: &GroundingDataset,
    val_set: &GroundingDataset,
    table: &EmbeddingTable,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    if config.encoder.kind == EncoderKind::WordLevel {
        return Err(TrainError::BadConfig {
            msg: "the word-level model trains through train_wl".into(),
        });
    }
    let tr = vectorize(train_set, table);
    if tr.rows.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let va = vectorize(val_set, table);
    let image_dim = train_set.image_dim();

    let mut model = GroundingModel::new(ModelConfig {
        source_dim: table.dim(),
        grounded_dim: config.grounded_dim,
        image_dim,
        align: config.align,
        encoder: config.encoder.clone(),
        seed: config.seed,
    })?;
    let mut optimizer = Nadam::new(config.lr);
    let mut shuffle_rng = ChaCha12Rng::seed_from_u64(config.seed ^ SHUFFLE_STREAM);
    let mut stopper = EarlyStopper::new(config.patience, !va.rows.is_empty());
    let mut restorable = snapshot_of(&model.blocks());
    let mut history = Vec::new();
    let mut diverged = false;

    'epochs: for epoch in 1..=config.epochs {
        let started = Instant::now();
        let mut order: Vec<usize> = (0..tr.rows.len()).collect();
        order.shuffle(&mut shuffle_rng);

        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let step = model_batch_loss(&model, &tr, chunk, image_dim, true).and_then(|(v, g)| {
                let grads = g.expect("training pass returns gradients");
                optimizer.step(&mut model.blocks_mut(), &grads)?;
                Ok(v)
            });
            match step {
                Ok(v) => {
                    loss_sum += v * chunk.len() as f64;
                    seen += chunk.len();
                }
                Err(e) if is_divergence(&e) => {
                    diverged = true;
                    break 'epochs;
                }
                Err(e) => return Err(e),
            }
        }
        debug_assert_eq!(seen, tr.rows.len(), "every pair trains once per epoch");
        let train_mse = loss_sum / seen as f64;

        let val_mse = if va.rows.is_empty() {
            None
        } else {
            let mut sum = 0.0;
            let mut n = 0usize;
            let all: Vec<usize> = (0..va.rows.len()).collect();
            for chunk in all.chunks(config.batch_size) {
                match model_batch_loss(&model, &va, chunk, image_dim, false) {
                    Ok((v, _)) => {
                        sum += v * chunk.len() as f64;
                        n += chunk.len();
                    }
                    Err(e) if is_divergence(&e) => {
                        diverged = true;
                        break 'epochs;
                    }
                    Err(e) => return Err(e),
                }
            }
            Some(sum / n as f64)
        };

        history.push(EpochRecord {
            epoch,
            train_mse,
            val_mse,
            seconds: started.elapsed().as_secs_f64(),
        });
        match stopper.observe(epoch, val_mse) {
            StopDecision::Improved => restorable = snapshot_of(&model.blocks()),
            StopDecision::NoImprovement => {}
            StopDecision::Halt => break,
        }
    }

    restore_into(&mut model.blocks_mut(), &restorable);
    Ok(TrainOutcome {
        model,
        history,
        best_epoch: stopper.best_epoch(),
        diverged,
        skipped_tokens: tr.skipped_tokens + va.skipped_tokens,
        dropped_pairs: tr.dropped_pairs + va.dropped_pairs,
    })
}

/// Word-level samples: each content word of a caption paired with the
/// PCA-reduced image vector of that caption.
pub(crate) struct WlSamples<'a> {
    pub(crate) rows: Vec<&'a [f64]>,
    pub(crate) targets: Vec<Vec<f64>>,
    pub(crate) skipped_tokens: usize,
    pub(crate) dropped_captions: usize,
}

pub(crate) fn wl_samples<'a>(
    set: &'a GroundingDataset,
    table: &'a EmbeddingTable,
    pca: &PcaProjection,
) -> Result<WlSamples<'a>, TrainError> {
    let mut out = WlSamples {
        rows: Vec::new(),
        targets: Vec::new(),
        skipped_tokens: 0,
        dropped_captions: 0,
    };
    for pair in set.pairs() {
        let mut rows = Vec::new();
        for token in &pair.tokens {
            if is_stop_word(token) {
                continue;
            }
            match table.lookup(token) {
                Some(r) => rows.push(r),
                None => out.skipped_tokens += 1,
            }
        }
        if rows.is_empty() {
            out.dropped_captions += 1;
            continue;
        }
        let target = pca.apply(set.image(pair))?;
        for r in rows {
            out.rows.push(r);
            out.targets.push(target.clone());
        }
    }
    Ok(out)
}

fn wl_batch_loss(
    align: &AlignmentMap,
    data: &WlSamples<'_>,
    idx: &[usize],
    train: bool,
) -> Result<(f64, Option<Vec<Mat>>), TrainError> {
    let d = align.input_dim();
    let c = align.output_dim();
    let tape = Tape::new();
    let leaves: Vec<_> = align
        .blocks()
        .iter()
        .map(|(_, m)| tape.leaf_from(m, train))
        .collect::<Result<_, _>>()?;
    let mut xv = Vec::with_capacity(idx.len() * d);
    let mut tv = Vec::with_capacity(idx.len() * c);
    for &i in idx {
        xv.extend_from_slice(data.rows[i]);
        tv.extend_from_slice(&data.targets[i]);
    }
    let x = tape.constant(idx.len(), d, xv)?;
    let target = tape.constant(idx.len(), c, tv)?;
    let pred = align.forward(&tape, &leaves, x)?;
    let loss = pred.mse_loss(target)?;
    let value = loss.scalar_value()?;
    if !train {
        return Ok((value, None));
    }
    loss.backward()?;
    let grads = leaves
        .iter()
        .map(|l| l.grad_mat().expect("parameter leaf has a gradient"))
        .collect();
    Ok((value, Some(grads)))
}

/// Trains a word-level alignment: stop words out, every remaining word of a
/// caption regressed onto the caption's PCA-reduced image vector.
pub fn train_wl(
    config: &TrainConfig,
    train_set: &GroundingDataset,
    val_set: &GroundingDataset,
    table: &EmbeddingTable,
) -> Result<WlOutcome, TrainError> {
    config.validate()?;

    // PCA on the distinct training image vectors, down to the alignment
    // output width so targets and predictions agree by construction.
    let mut seen = std::collections::HashSet::new();
    let mut image_rows: Vec<f64> = Vec::new();
    let mut n_images = 0usize;
    for pair in train_set.pairs() {
        let img = train_set.image(pair);
        if seen.insert(img.as_ptr()) {
            image_rows.extend_from_slice(img);
            n_images += 1;
        }
    }
    if n_images == 0 {
        return Err(TrainError::EmptyDataset);
    }
    let pca = pca_fit(
        &Mat::from_vec(n_images, train_set.image_dim(), image_rows),
        config.grounded_dim,
    )?;

    let tr = wl_samples(train_set, table, &pca)?;
    if tr.rows.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let va = wl_samples(val_set, table, &pca)?;

    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    let mut align = AlignmentMap::new(&config.align, table.dim(), config.grounded_dim, &mut rng)?;
    let mut optimizer = Nadam::new(config.lr);
    let mut shuffle_rng = ChaCha12Rng::seed_from_u64(config.seed ^ SHUFFLE_STREAM);
    let mut stopper = EarlyStopper::new(config.patience, !va.rows.is_empty());
    let mut restorable = snapshot_of(&align.blocks());
    let mut history = Vec::new();
    let mut diverged = false;

    'epochs: for epoch in 1..=config.epochs {
        let started = Instant::now();
        let mut order: Vec<usize> = (0..tr.rows.len()).collect();
        order.shuffle(&mut shuffle_rng);

        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let step = wl_batch_loss(&align, &tr, chunk, true).and_then(|(v, g)| {
                let grads = g.expect("training pass returns gradients");
                optimizer.step(&mut align.blocks_mut(), &grads)?;
                Ok(v)
            });
            match step {
                Ok(v) => {
                    loss_sum += v * chunk.len() as f64;
                    seen += chunk.len();
                }
                Err(e) if is_divergence(&e) => {
                    diverged = true;
                    break 'epochs;
                }
                Err(e) => return Err(e),
            }
        }
        let train_mse = loss_sum / seen as f64;

        let val_mse = if va.rows.is_empty() {
            None
        } else {
            let mut sum = 0.0;
            let all: Vec<usize> = (0..va.rows.len()).collect();
            for chunk in all.chunks(config.batch_size) {
                match wl_batch_loss(&align, &va, chunk, false) {
                    Ok((v, _)) => sum += v * chunk.len() as f64,
                    Err(e) if is_divergence(&e) => {
                        diverged = true;
                        break 'epochs;
                    }
                    Err(e) => return Err(e),
                }
            }
            Some(sum / va.rows.len() as f64)
        };

        history.push(EpochRecord {
            epoch,
            train_mse,
            val_mse,
            seconds: started.elapsed().as_secs_f64(),
        });
        match stopper.observe(epoch, val_mse) {
            StopDecision::Improved => restorable = snapshot_of(&align.blocks()),
            StopDecision::NoImprovement => {}
            StopDecision::Halt => break,
        }
    }

    restore_into(&mut align.blocks_mut(), &restorable);
    Ok(WlOutcome {
        align,
        pca,
        history,
        best_epoch: stopper.best_epoch(),
        diverged,
        skipped_tokens: tr.skipped_tokens + va.skipped_tokens,
        dropped_captions: tr.dropped_captions + va.dropped_captions,
    })
}
