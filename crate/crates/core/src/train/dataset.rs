//! Caption/image-vector ingestion and the train/validation split.
//!
//! Captions file: one `image_id<TAB>caption text[<TAB>train|val]` record per
//! line. Image vectors file: a `N dim` header, then `image_id f1 ... fdim`
//! per line. Five captions of the same image become five pairs.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use super::text::{build_vocab, preprocess_caption};
use super::TrainError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
}

#[derive(Clone, Debug)]
pub struct CaptionImagePair {
    pub tokens: Vec<String>,
    pub image_id: String,
    image_index: usize,
}

/// One split of (caption, image vector) pairs. Images are shared with the
/// sibling split; pairs reference them by index.
#[derive(Clone, Debug)]
pub struct GroundingDataset {
    split: Split,
    pairs: Vec<CaptionImagePair>,
    images: Arc<Vec<Vec<f64>>>,
    image_dim: usize,
}

impl GroundingDataset {
    /// Builds a dataset directly from (tokens, image vector, id) triples.
    /// Mostly for synthetic corpora in tests and experiments.
    pub fn from_parts(
        split: Split,
        triples: Vec<(Vec<String>, Vec<f64>, String)>,
    ) -> Result<Self, TrainError> {
        if triples.is_empty() {
            return Err(TrainError::EmptyDataset);
        }
        let image_dim = triples[0].1.len();
        let mut pairs = Vec::with_capacity(triples.len());
        let mut images = Vec::with_capacity(triples.len());
        for (tokens, image, id) in triples {
            if tokens.is_empty() {
                return Err(TrainError::Parse {
                    path: "<memory>".into(),
                    line: pairs.len() + 1,
                    msg: "empty token list".into(),
                });
            }
            if image.len() != image_dim {
                return Err(TrainError::DimInconsistent {
                    id,
                    expected: image_dim,
                    got: image.len(),
                });
            }
            pairs.push(CaptionImagePair {
                tokens,
                image_id: id,
                image_index: images.len(),
            });
            images.push(image);
        }
        Ok(Self {
            split,
            pairs,
            images: Arc::new(images),
            image_dim,
        })
    }

    /// A split with no pairs, e.g. when training without validation data.
    pub fn empty(split: Split, image_dim: usize) -> Self {
        Self {
            split,
            pairs: Vec::new(),
            images: Arc::new(Vec::new()),
            image_dim,
        }
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn pairs(&self) -> &[CaptionImagePair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn image_dim(&self) -> usize {
        self.image_dim
    }

    pub fn image(&self, pair: &CaptionImagePair) -> &[f64] {
        &self.images[pair.image_index]
    }
}

#[derive(Clone, Debug)]
pub struct DatasetOptions {
    /// Keep only this many most-frequent caption tokens.
    pub vocab_top_k: usize,
    /// Fraction of images moved to validation when the captions file does
    /// not carry split tags. Split is by image, so all captions of an image
    /// land on the same side.
    pub val_fraction: f64,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        Self {
            vocab_top_k: 10_000,
            val_fraction: 0.05,
        }
    }
}

#[derive(Debug)]
pub struct DataReport {
    pub train: GroundingDataset,
    pub val: GroundingDataset,
    /// The frequency-ranked vocabulary the captions were filtered against.
    pub vocab: Vec<String>,
    /// Pairs dropped because vocabulary filtering emptied their caption.
    pub dropped_empty: usize,
}

/// Loads captions and image vectors, preprocesses, splits, builds the top-k
/// vocabulary from training captions, and filters both splits against it.
pub fn load_dataset(
    captions_path: &Path,
    vectors_path: &Path,
    options: &DatasetOptions,
) -> Result<DataReport, TrainError> {
    let io = |p: &Path, source| TrainError::Io {
        path: p.display().to_string(),
        source,
    };

    // Image vectors.
    let vec_text = fs::read_to_string(vectors_path).map_err(|e| io(vectors_path, e))?;
    let vstr = vectors_path.display().to_string();
    let parse = |line: usize, msg: &str| TrainError::Parse {
        path: vstr.clone(),
        line,
        msg: msg.into(),
    };
    let mut vec_lines = vec_text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = vec_lines.next().ok_or_else(|| parse(1, "empty file"))?;
    let header_fields: Vec<&str> = header.split_whitespace().collect();
    if header_fields.len() != 2 {
        return Err(parse(1, "expected 'N dim' header"));
    }
    let declared_n: usize = header_fields[0].parse().map_err(|_| parse(1, "bad N"))?;
    let image_dim: usize = header_fields[1].parse().map_err(|_| parse(1, "bad dim"))?;

    let mut images: Vec<Vec<f64>> = Vec::with_capacity(declared_n);
    let mut image_index: HashMap<String, usize> = HashMap::with_capacity(declared_n);
    for (lineno, line) in vec_lines {
        let mut fields = line.split_whitespace();
        let id = fields
            .next()
            .ok_or_else(|| parse(lineno + 1, "missing image id"))?;
        let values: Result<Vec<f64>, _> = fields.map(str::parse).collect();
        let values = values.map_err(|_| parse(lineno + 1, "bad float"))?;
        if values.len() != image_dim {
            return Err(TrainError::DimInconsistent {
                id: id.to_string(),
                expected: image_dim,
                got: values.len(),
            });
        }
        if image_index.insert(id.to_string(), images.len()).is_some() {
            return Err(TrainError::DuplicateImageId { id: id.to_string() });
        }
        images.push(values);
    }
    if images.is_empty() {
        return Err(TrainError::EmptyDataset);
    }

    // Captions.
    let cap_text = fs::read_to_string(captions_path).map_err(|e| io(captions_path, e))?;
    let cstr = captions_path.display().to_string();
    struct RawCaption {
        image_id: String,
        image_index: usize,
        tokens: Vec<String>,
        split: Option<Split>,
        line: usize,
    }
    let mut raws: Vec<RawCaption> = Vec::new();
    let mut any_tagged = false;
    for (lineno, line) in cap_text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let id = fields.next().unwrap_or_default().trim();
        let caption = fields.next().ok_or_else(|| TrainError::Parse {
            path: cstr.clone(),
            line: lineno + 1,
            msg: "expected 'image_id<TAB>caption'".into(),
        })?;
        let split = match fields.next().map(str::trim) {
            None => None,
            Some("train") => Some(Split::Train),
            Some("val") => Some(Split::Val),
            Some(other) => {
                return Err(TrainError::Parse {
                    path: cstr.clone(),
                    line: lineno + 1,
                    msg: format!("unknown split tag '{other}'"),
                })
            }
        };
        any_tagged |= split.is_some();
        let image_index = *image_index
            .get(id)
            .ok_or_else(|| TrainError::UnresolvedImageId {
                id: id.to_string(),
                line: lineno + 1,
            })?;
        raws.push(RawCaption {
            image_id: id.to_string(),
            image_index,
            tokens: preprocess_caption(caption),
            split,
            line: lineno + 1,
        });
    }
    if raws.is_empty() {
        return Err(TrainError::EmptyDataset);
    }

    // Split assignment: explicit tags when given, otherwise the last
    // fraction of images in first-appearance order goes to validation.
    let splits: Vec<Split> = if any_tagged {
        raws.iter()
            .map(|r| {
                r.split.ok_or_else(|| TrainError::Parse {
                    path: cstr.clone(),
                    line: r.line,
                    msg: "file mixes tagged and untagged captions".into(),
                })
            })
            .collect::<Result<_, _>>()?
    } else {
        let mut order: Vec<usize> = Vec::new();
        let mut seen: HashMap<usize, usize> = HashMap::new();
        for r in &raws {
            if let std::collections::hash_map::Entry::Vacant(e) = seen.entry(r.image_index) {
                e.insert(order.len());
                order.push(r.image_index);
            }
        }
        let n_val = (order.len() as f64 * options.val_fraction).ceil() as usize;
        let threshold = order.len().saturating_sub(n_val);
        raws.iter()
            .map(|r| {
                if seen[&r.image_index] >= threshold {
                    Split::Val
                } else {
                    Split::Train
                }
            })
            .collect()
    };

    let train_captions: Vec<&[String]> = raws
        .iter()
        .zip(&splits)
        .filter(|(_, s)| **s == Split::Train)
        .map(|(r, _)| r.tokens.as_slice())
        .collect();
    let vocab = build_vocab(train_captions, options.vocab_top_k)?;
    let vocab_set: std::collections::HashSet<&str> = vocab.iter().map(String::as_str).collect();

    let images = Arc::new(images);
    let mut dropped_empty = 0usize;
    let mut train_pairs = Vec::new();
    let mut val_pairs = Vec::new();
    for (raw, split) in raws.into_iter().zip(splits) {
        let tokens: Vec<String> = raw
            .tokens
            .into_iter()
            .filter(|t| vocab_set.contains(t.as_str()))
            .collect();
        if tokens.is_empty() {
            dropped_empty += 1;
            continue;
        }
        let pair = CaptionImagePair {
            tokens,
            image_id: raw.image_id,
            image_index: raw.image_index,
        };
        match split {
            Split::Train => train_pairs.push(pair),
            Split::Val => val_pairs.push(pair),
        }
    }
    if train_pairs.is_empty() {
        return Err(TrainError::EmptyDataset);
    }

    let make = |split, pairs| GroundingDataset {
        split,
        pairs,
        images: Arc::clone(&images),
        image_dim,
    };
    Ok(DataReport {
        train: make(Split::Train, train_pairs),
        val: make(Split::Val, val_pairs),
        vocab,
        dropped_empty,
    })
}
