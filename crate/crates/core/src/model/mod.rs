//! The alignment map, the sentence-encoder zoo, and zero-shot grounding.
//!
//! The only artifact applied at inference time is the [`AlignmentMap`]: once
//! trained, it maps every textual vector into the grounded space row by row,
//! including words that never appeared in a training caption. The encoders
//! exist to give the alignment its training signal.

mod align;
mod checkpoint;
mod encoder;

pub use align::{AlignConfig, AlignmentMap};
pub use checkpoint::{content_id, load_checkpoint, save_checkpoint};
pub use encoder::{sinusoidal_positions, EncoderConfig, EncoderKind, EncoderModel, SequenceBatch};

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use crate::embed::{EmbedError, EmbeddingTable};
use crate::mat::Mat;
use crate::tensor::{Tape, Tensor, TensorError};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("unknown alignment spec '{spec}', expected <linear|relu|lrelu|tanh|sigmoid>:<layers>")]
    BadAlignSpec { spec: String },
    #[error("unknown encoder spec '{spec}', expected wl, bow, gru, lstm, or te[:layers]")]
    BadEncoderSpec { spec: String },
    #[error("attention heads ({heads}) must divide the model width ({dim})")]
    HeadsMismatch { dim: usize, heads: usize },
    #[error("{what}: expected dimension {expected}, got {got}")]
    DimMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("caption has no usable tokens after vocabulary filtering")]
    EmptyCaption,
    #[error("empty sequence passed to a sentence encoder")]
    EmptySequence,
    #[error("the word-level model has no sentence encoder")]
    NotSequenceLevel,
    #[error("{0}")]
    Tensor(#[from] TensorError),
    #[error("{0}")]
    Embed(#[from] EmbedError),
    #[error("{path}: {source}")]
    CheckpointIo {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: bad checkpoint: {msg}")]
    BadCheckpoint {
        path: String,
        line: usize,
        msg: String,
    },
}

/// Everything needed to build a trainable model deterministically.
#[derive(Clone, Debug)]
pub struct ModelConfig {
    /// Textual embedding width d.
    pub source_dim: usize,
    /// Grounded width c, the alignment output.
    pub grounded_dim: usize,
    /// Width of the image feature vectors the encoder predicts.
    pub image_dim: usize,
    pub align: AlignConfig,
    pub encoder: EncoderConfig,
    pub seed: u64,
}

/// The trainable pair: alignment map plus sentence encoder.
#[derive(Clone, Debug)]
pub struct GroundingModel {
    pub align: AlignmentMap,
    pub encoder: EncoderModel,
    config: ModelConfig,
}

impl GroundingModel {
    pub fn new(config: ModelConfig) -> Result<Self, ModelError> {
        let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
        let align = AlignmentMap::new(
            &config.align,
            config.source_dim,
            config.grounded_dim,
            &mut rng,
        )?;
        let encoder = EncoderModel::new(
            &config.encoder,
            config.grounded_dim,
            config.image_dim,
            &mut rng,
        )?;
        Ok(Self {
            align,
            encoder,
            config,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn block_count(&self) -> usize {
        self.align.block_count() + self.encoder.block_count()
    }

    /// All parameter blocks, alignment first, in a stable named order.
    pub fn blocks(&self) -> Vec<(String, &Mat)> {
        let mut out = self.align.blocks();
        out.extend(self.encoder.blocks());
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<(String, &mut Mat)> {
        let mut out = self.align.blocks_mut();
        out.extend(self.encoder.blocks_mut());
        out
    }

    /// Creates one tape leaf per parameter block, in `blocks()` order.
    pub fn make_leaves<'t>(
        &self,
        tape: &'t Tape,
        requires_grad: bool,
    ) -> Result<Vec<Tensor<'t>>, ModelError> {
        self.blocks()
            .iter()
            .map(|(_, m)| Ok(tape.leaf_from(m, requires_grad)?))
            .collect()
    }

    /// Forward pass over a batch: textual step inputs through the alignment,
    /// then the encoder, then the output projection when one exists. Returns
    /// the B x image_dim predictions.
    pub fn forward_tape<'t>(
        &self,
        tape: &'t Tape,
        leaves: &[Tensor<'t>],
        batch: &SequenceBatch,
    ) -> Result<Tensor<'t>, ModelError> {
        assert_eq!(leaves.len(), self.block_count(), "one leaf per block");
        let (align_leaves, enc_leaves) = leaves.split_at(self.align.block_count());
        match self.encoder.kind() {
            EncoderKind::WordLevel => Err(ModelError::NotSequenceLevel),
            EncoderKind::Transformer => {
                let mut pooled = Vec::with_capacity(batch.samples.len());
                for sample in &batch.samples {
                    let x = tape.leaf_from(sample, false)?;
                    let g = self.align.forward(tape, align_leaves, x)?;
                    pooled.push(self.encoder.transformer_pooled(tape, enc_leaves, g)?);
                }
                let h = tape.concat_rows(&pooled)?;
                self.encoder.project(tape, enc_leaves, h)
            }
            _ => {
                let mut grounded_steps = Vec::with_capacity(batch.steps.len());
                for step in &batch.steps {
                    let x = tape.leaf_from(step, false)?;
                    grounded_steps.push(self.align.forward(tape, align_leaves, x)?);
                }
                let h = self.encoder.sequence_hidden(
                    tape,
                    enc_leaves,
                    &grounded_steps,
                    &batch.lengths,
                )?;
                self.encoder.project(tape, enc_leaves, h)
            }
        }
    }

    /// Predicts the image vector for one caption: look each token up in the
    /// source table (out-of-vocabulary tokens are skipped), map through the
    /// alignment, encode, project.
    pub fn predict_image(
        &self,
        tokens: &[&str],
        table: &EmbeddingTable,
    ) -> Result<Vec<f64>, ModelError> {
        if table.dim() != self.align.input_dim() {
            return Err(ModelError::DimMismatch {
                what: "source table",
                expected: self.align.input_dim(),
                got: table.dim(),
            });
        }
        let rows: Vec<&[f64]> = tokens.iter().filter_map(|t| table.lookup(t)).collect();
        if rows.is_empty() {
            return Err(ModelError::EmptyCaption);
        }
        let batch = SequenceBatch::single(self.encoder.kind(), &rows);
        let tape = Tape::new();
        let leaves = self.make_leaves(&tape, false)?;
        let pred = self.forward_tape(&tape, &leaves, &batch)?;
        Ok(pred.value())
    }
}

/// A grounded embedding table together with where it came from.
#[derive(Clone, Debug)]
pub struct GroundedSpace {
    pub table: EmbeddingTable,
    pub source_name: String,
    pub checkpoint_id: String,
    pub config_hash: String,
}

/// Provenance labels attached to a grounded space.
#[derive(Clone, Debug, Default)]
pub struct Provenance {
    pub checkpoint_id: String,
    pub config_hash: String,
}

/// Maps every row of `source` through the alignment. Rows are independent:
/// grounding a sub-vocabulary produces bitwise the same rows as grounding
/// the full table, which is what makes the zero-shot use safe.
pub fn ground_vocabulary(
    align: &AlignmentMap,
    source: &EmbeddingTable,
    provenance: Provenance,
) -> Result<GroundedSpace, ModelError> {
    if source.dim() != align.input_dim() {
        return Err(ModelError::DimMismatch {
            what: "source table",
            expected: align.input_dim(),
            got: source.dim(),
        });
    }
    let c = align.output_dim();
    let mut data = Vec::with_capacity(source.len() * c);
    for i in 0..source.len() {
        data.extend(align.apply(source.row(i))?);
    }
    let table = EmbeddingTable::new(
        format!("{}-grounded", source.name()),
        source.words().to_vec(),
        Mat::from_vec(source.len(), c, data),
    )?;
    Ok(GroundedSpace {
        table,
        source_name: source.name().to_string(),
        checkpoint_id: provenance.checkpoint_id,
        config_hash: provenance.config_hash,
    })
}
