//! Visually grounded word embeddings.
//!
//! The library trains an alignment from pretrained textual word vectors to an
//! image-feature space using caption/image-vector pairs, applies the learned
//! alignment to an entire vocabulary to produce grounded embeddings for words
//! never seen in training, and evaluates embedding spaces on word-similarity
//! benchmarks, nearest-neighbor retrieval, and a concreteness probe.
//!
//! Everything runs on f64 through a small tape-based autodiff engine in
//! [`tensor`]; frozen data (embedding tables, trained parameters) moves
//! through plain matrices in [`mat`].

pub mod embed;
pub mod eval;
pub mod mat;
pub mod model;
pub mod tensor;
pub mod train;
