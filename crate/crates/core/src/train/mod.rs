//! Dataset ingestion, preprocessing, batching, NAdam optimization, and the
//! training loops with early stopping.

mod dataset;
mod nadam;
mod text;
mod trainer;

pub use dataset::{
    load_dataset, CaptionImagePair, DataReport, DatasetOptions, GroundingDataset, Split,
};
pub use nadam::Nadam;
pub use text::{build_vocab, is_stop_word, preprocess_caption, stop_words};
pub use trainer::{
    train, train_wl, EarlyStopper, EpochRecord, StopDecision, TrainConfig, TrainOutcome, WlOutcome,
};

use thiserror::Error;

use crate::embed::EmbedError;
use crate::model::ModelError;
use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum TrainError {
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
    #[error("caption references unknown image id '{id}' at line {line}")]
    UnresolvedImageId { id: String, line: usize },
    #[error("image '{id}' has dimension {got}, expected {expected}")]
    DimInconsistent {
        id: String,
        expected: usize,
        got: usize,
    },
    #[error("duplicate image id '{id}' in vectors file")]
    DuplicateImageId { id: String },
    #[error("dataset has no usable pairs")]
    EmptyDataset,
    #[error("captions contain no tokens to build a vocabulary from")]
    EmptyVocab,
    #[error("bad training configuration: {msg}")]
    BadConfig { msg: String },
    #[error("non-finite gradient in parameter block '{block}' at step {step}")]
    NonFiniteGrad { block: String, step: u64 },
    #[error("{0}")]
    Model(#[from] ModelError),
    #[error("{0}")]
    Embed(#[from] EmbedError),
    #[error("{0}")]
    Tensor(#[from] TensorError),
}

#[cfg(test)]
mod tests;
