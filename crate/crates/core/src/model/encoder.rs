//! The sentence-encoder zoo: word-level, bag-of-words, GRU, LSTM, and a
//! transformer encoder stack.

use rand::Rng;

use super::ModelError;
use crate::mat::Mat;
use crate::tensor::{Activation, ReduceKind, Tape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EncoderKind {
    /// No sentence encoder at all; each content word regresses onto its
    /// image vector on its own.
    WordLevel,
    /// Mean of the grounded word vectors through a tanh hidden layer.
    BagOfWords,
    Gru,
    Lstm,
    Transformer,
}

impl EncoderKind {
    pub fn canonical_name(self) -> &'static str {
        match self {
            EncoderKind::WordLevel => "wl",
            EncoderKind::BagOfWords => "bow",
            EncoderKind::Gru => "gru",
            EncoderKind::Lstm => "lstm",
            EncoderKind::Transformer => "te",
        }
    }
}

/// Encoder choice plus its width knobs.
///
/// `hidden` is the recurrent/hidden width for LSTM, GRU and BoW; the
/// transformer works at the grounded width directly. `layers` is the
/// transformer stack depth (the recurrent encoders are single-layer).
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    /// Transformer feed-forward width; defaults to 4x the grounded width.
    pub ff_dim: Option<usize>,
    /// Add fixed sinusoidal position information before the first
    /// transformer layer.
    pub positional: bool,
}

impl EncoderConfig {
    pub fn new(kind: EncoderKind) -> Self {
        Self {
            kind,
            hidden: 2048,
            layers: 1,
            heads: 16,
            ff_dim: None,
            positional: true,
        }
    }

    /// Parses canonical encoder names: `wl`, `bow`, `gru`, `lstm`,
    /// `te:<layers>` (bare `te` means one layer).
    pub fn parse(spec: &str) -> Result<Self, ModelError> {
        let bad = || ModelError::BadEncoderSpec {
            spec: spec.to_string(),
        };
        let (name, layers) = match spec.split_once(':') {
            Some((n, l)) => (n, Some(l.parse::<usize>().map_err(|_| bad())?)),
            None => (spec, None),
        };
        let kind = match name {
            "wl" => EncoderKind::WordLevel,
            "bow" => EncoderKind::BagOfWords,
            "gru" => EncoderKind::Gru,
            "lstm" => EncoderKind::Lstm,
            "te" => EncoderKind::Transformer,
            _ => return Err(bad()),
        };
        let mut cfg = Self::new(kind);
        match layers {
            Some(0) => return Err(bad()),
            Some(l) if kind == EncoderKind::Transformer => cfg.layers = l,
            Some(_) => return Err(bad()),
            None => {}
        }
        Ok(cfg)
    }

    pub fn canonical_name(&self) -> String {
        match self.kind {
            EncoderKind::Transformer => format!("te:{}", self.layers),
            k => k.canonical_name().to_string(),
        }
    }
}

const LSTM_GATES: [&str; 4] = ["i", "f", "g", "o"];
const GRU_GATES: [&str; 3] = ["z", "r", "n"];
const TE_LAYER_BLOCKS: [&str; 16] = [
    "wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo", "ln1_g", "ln1_b", "w1", "b1", "w2", "b2",
    "ln2_g", "ln2_b",
];

#[derive(Clone, Debug)]
enum EncoderParams {
    WordLevel,
    Bow { wh: Mat, bh: Mat },
    Gru { gates: Vec<Gate> },
    Lstm { gates: Vec<Gate> },
    Transformer { layers: Vec<Vec<Mat>> },
}

#[derive(Clone, Debug)]
struct Gate {
    w: Mat,
    u: Mat,
    b: Mat,
}

/// A sentence encoder with parameters and an optional output projection to
/// the image width. LSTM and GRU skip the projection when their hidden width
/// already equals the image width, so the final hidden state is the
/// prediction itself.
#[derive(Clone, Debug)]
pub struct EncoderModel {
    kind: EncoderKind,
    input_dim: usize,
    output_dim: usize,
    hidden: usize,
    layers: usize,
    heads: usize,
    ff_dim: usize,
    positional: bool,
    params: EncoderParams,
    projection: Option<(Mat, Mat)>,
}

impl EncoderModel {
    pub fn new<R: Rng>(
        config: &EncoderConfig,
        input_dim: usize,
        image_dim: usize,
        rng: &mut R,
    ) -> Result<Self, ModelError> {
        let hidden = config.hidden;
        let ff_dim = config.ff_dim.unwrap_or(4 * input_dim);
        let (params, out_of_encoder) = match config.kind {
            EncoderKind::WordLevel => (EncoderParams::WordLevel, input_dim),
            EncoderKind::BagOfWords => (
                EncoderParams::Bow {
                    wh: Mat::glorot(input_dim, hidden, rng),
                    bh: Mat::zeros(1, hidden),
                },
                hidden,
            ),
            EncoderKind::Gru => (
                EncoderParams::Gru {
                    gates: make_gates(GRU_GATES.len(), input_dim, hidden, rng),
                },
                hidden,
            ),
            EncoderKind::Lstm => (
                EncoderParams::Lstm {
                    gates: make_gates(LSTM_GATES.len(), input_dim, hidden, rng),
                },
                hidden,
            ),
            EncoderKind::Transformer => {
                if config.heads == 0 || !input_dim.is_multiple_of(config.heads) {
                    return Err(ModelError::HeadsMismatch {
                        dim: input_dim,
                        heads: config.heads,
                    });
                }
                let layers = (0..config.layers)
                    .map(|_| make_te_layer(input_dim, ff_dim, rng))
                    .collect();
                (EncoderParams::Transformer { layers }, input_dim)
            }
        };

        let projection = match config.kind {
            EncoderKind::WordLevel => None,
            EncoderKind::Lstm | EncoderKind::Gru if out_of_encoder == image_dim => None,
            _ => Some((
                Mat::glorot(out_of_encoder, image_dim, rng),
                Mat::zeros(1, image_dim),
            )),
        };

        Ok(Self {
            kind: config.kind,
            input_dim,
            output_dim: if config.kind == EncoderKind::WordLevel {
                input_dim
            } else {
                image_dim
            },
            hidden,
            layers: if config.kind == EncoderKind::Transformer {
                config.layers
            } else {
                1
            },
            heads: config.heads,
            ff_dim,
            positional: config.positional,
            params,
            projection,
        })
    }

    pub fn kind(&self) -> EncoderKind {
        self.kind
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn config(&self) -> EncoderConfig {
        EncoderConfig {
            kind: self.kind,
            hidden: self.hidden,
            layers: self.layers,
            heads: self.heads,
            ff_dim: Some(self.ff_dim),
            positional: self.positional,
        }
    }

    pub fn block_count(&self) -> usize {
        self.kind_block_count() + if self.projection.is_some() { 2 } else { 0 }
    }

    fn kind_block_count(&self) -> usize {
        match &self.params {
            EncoderParams::WordLevel => 0,
            EncoderParams::Bow { .. } => 2,
            EncoderParams::Gru { gates } | EncoderParams::Lstm { gates } => 3 * gates.len(),
            EncoderParams::Transformer { layers } => TE_LAYER_BLOCKS.len() * layers.len(),
        }
    }

    pub fn blocks(&self) -> Vec<(String, &Mat)> {
        let mut out: Vec<(String, &Mat)> = Vec::with_capacity(self.block_count());
        match &self.params {
            EncoderParams::WordLevel => {}
            EncoderParams::Bow { wh, bh } => {
                out.push(("bow.w_h".into(), wh));
                out.push(("bow.b_h".into(), bh));
            }
            EncoderParams::Gru { gates } => {
                for (g, gate) in gates.iter().zip(GRU_GATES) {
                    out.push((format!("gru.w_{gate}"), &g.w));
                    out.push((format!("gru.u_{gate}"), &g.u));
                    out.push((format!("gru.b_{gate}"), &g.b));
                }
            }
            EncoderParams::Lstm { gates } => {
                for (g, gate) in gates.iter().zip(LSTM_GATES) {
                    out.push((format!("lstm.w_{gate}"), &g.w));
                    out.push((format!("lstm.u_{gate}"), &g.u));
                    out.push((format!("lstm.b_{gate}"), &g.b));
                }
            }
            EncoderParams::Transformer { layers } => {
                for (i, layer) in layers.iter().enumerate() {
                    for (name, m) in TE_LAYER_BLOCKS.iter().zip(layer) {
                        out.push((format!("te.l{i}.{name}"), m));
                    }
                }
            }
        }
        if let Some((w, b)) = &self.projection {
            out.push(("proj.w".into(), w));
            out.push(("proj.b".into(), b));
        }
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<(String, &mut Mat)> {
        let mut out: Vec<(String, &mut Mat)> = Vec::new();
        match &mut self.params {
            EncoderParams::WordLevel => {}
            EncoderParams::Bow { wh, bh } => {
                out.push(("bow.w_h".into(), wh));
                out.push(("bow.b_h".into(), bh));
            }
            EncoderParams::Gru { gates } => {
                for (g, gate) in gates.iter_mut().zip(GRU_GATES) {
                    out.push((format!("gru.w_{gate}"), &mut g.w));
                    out.push((format!("gru.u_{gate}"), &mut g.u));
                    out.push((format!("gru.b_{gate}"), &mut g.b));
                }
            }
            EncoderParams::Lstm { gates } => {
                for (g, gate) in gates.iter_mut().zip(LSTM_GATES) {
                    out.push((format!("lstm.w_{gate}"), &mut g.w));
                    out.push((format!("lstm.u_{gate}"), &mut g.u));
                    out.push((format!("lstm.b_{gate}"), &mut g.b));
                }
            }
            EncoderParams::Transformer { layers } => {
                for (i, layer) in layers.iter_mut().enumerate() {
                    for (name, m) in TE_LAYER_BLOCKS.iter().zip(layer) {
                        out.push((format!("te.l{i}.{name}"), m));
                    }
                }
            }
        }
        if let Some((w, b)) = &mut self.projection {
            out.push(("proj.w".into(), w));
            out.push(("proj.b".into(), b));
        }
        out
    }

    fn make_enc_leaves<'t>(&self, tape: &'t Tape) -> Result<Vec<Tensor<'t>>, ModelError> {
        self.blocks()
            .iter()
            .map(|(_, m)| Ok(tape.leaf_from(m, false)?))
            .collect()
    }

    /// Encodes one already-grounded sentence (rows of `grounded`, one word
    /// per row). LSTM and GRU return the hidden state at the last token,
    /// BoW the tanh hidden over the mean vector, and the transformer its
    /// mean-pooled output after the linear projection.
    pub fn encode(&self, grounded: &Mat) -> Result<Vec<f64>, ModelError> {
        if grounded.rows() == 0 {
            return Err(ModelError::EmptySequence);
        }
        if grounded.cols() != self.input_dim {
            return Err(ModelError::DimMismatch {
                what: "encoder input",
                expected: self.input_dim,
                got: grounded.cols(),
            });
        }
        let tape = Tape::new();
        let leaves = self.make_enc_leaves(&tape)?;
        match self.kind {
            EncoderKind::WordLevel => Err(ModelError::NotSequenceLevel),
            EncoderKind::Transformer => {
                let x = tape.leaf_from(grounded, false)?;
                let pooled = self.transformer_pooled(&tape, &leaves, x)?;
                Ok(self.project(&tape, &leaves, pooled)?.value())
            }
            _ => {
                let n = grounded.rows();
                let steps: Vec<Tensor<'_>> = (0..n)
                    .map(|i| tape.constant(1, self.input_dim, grounded.row(i).to_vec()))
                    .collect::<Result<_, _>>()?;
                Ok(self.sequence_hidden(&tape, &leaves, &steps, &[n])?.value())
            }
        }
    }

    /// Hidden representation for a time-major batch of grounded steps
    /// (each B x c). Recurrent kinds read their state at each row's true
    /// last step; BoW averages over each row's true length.
    pub fn sequence_hidden<'t>(
        &self,
        tape: &'t Tape,
        leaves: &[Tensor<'t>],
        steps: &[Tensor<'t>],
        lengths: &[usize],
    ) -> Result<Tensor<'t>, ModelError> {
        if steps.is_empty() {
            return Err(ModelError::EmptySequence);
        }
        let rows = steps[0].rows();
        match self.kind {
            EncoderKind::BagOfWords => {
                let mean = tape.seq_mean(steps, lengths)?;
                let wh = leaves[0];
                let bh = leaves[1];
                Ok(mean
                    .matmul(wh)?
                    .add_bias(bh)?
                    .activation(Activation::Tanh)?)
            }
            EncoderKind::Lstm => {
                let mut h = tape.zeros(rows, self.hidden)?;
                let mut c = tape.zeros(rows, self.hidden)?;
                let mut hs = Vec::with_capacity(steps.len());
                for &x in steps {
                    // Gate order i, f, g, o; leaves hold w, u, b per gate.
                    let pre = |k: usize| -> Result<Tensor<'t>, ModelError> {
                        Ok(x.matmul(leaves[3 * k])?
                            .add(h.matmul(leaves[3 * k + 1])?)?
                            .add_bias(leaves[3 * k + 2])?)
                    };
                    let i = pre(0)?.activation(Activation::Sigmoid)?;
                    let f = pre(1)?.activation(Activation::Sigmoid)?;
                    let g = pre(2)?.activation(Activation::Tanh)?;
                    let o = pre(3)?.activation(Activation::Sigmoid)?;
                    c = f.mul(c)?.add(i.mul(g)?)?;
                    h = o.mul(c.activation(Activation::Tanh)?)?;
                    hs.push(h);
                }
                Ok(tape.seq_last(&hs, lengths)?)
            }
            EncoderKind::Gru => {
                let mut h = tape.zeros(rows, self.hidden)?;
                let mut hs = Vec::with_capacity(steps.len());
                for &x in steps {
                    // Gate order z, r, n; candidate uses (r . h) through u_n.
                    let z = x
                        .matmul(leaves[0])?
                        .add(h.matmul(leaves[1])?)?
                        .add_bias(leaves[2])?
                        .activation(Activation::Sigmoid)?;
                    let r = x
                        .matmul(leaves[3])?
                        .add(h.matmul(leaves[4])?)?
                        .add_bias(leaves[5])?
                        .activation(Activation::Sigmoid)?;
                    let n = x
                        .matmul(leaves[6])?
                        .add(r.mul(h)?.matmul(leaves[7])?)?
                        .add_bias(leaves[8])?
                        .activation(Activation::Tanh)?;
                    let keep = z.mul(h)?;
                    h = z.affine(-1.0, 1.0)?.mul(n)?.add(keep)?;
                    hs.push(h);
                }
                Ok(tape.seq_last(&hs, lengths)?)
            }
            EncoderKind::WordLevel => Err(ModelError::NotSequenceLevel),
            EncoderKind::Transformer => unreachable!("transformer goes through transformer_pooled"),
        }
    }

    /// One sample through the transformer stack: self-attention and
    /// feed-forward sublayers with residuals and layer norm, mean-pooled
    /// over tokens into a 1 x c row.
    pub fn transformer_pooled<'t>(
        &self,
        tape: &'t Tape,
        leaves: &[Tensor<'t>],
        grounded: Tensor<'t>,
    ) -> Result<Tensor<'t>, ModelError> {
        let n = grounded.rows();
        if n == 0 {
            return Err(ModelError::EmptySequence);
        }
        let c = self.input_dim;
        let dk = c / self.heads;
        let scale = 1.0 / (dk as f64).sqrt();

        let mut h = grounded;
        if self.positional {
            let pe = tape.leaf_from(&sinusoidal_positions(n, c), false)?;
            h = h.add(pe)?;
        }
        for layer in 0..self.layers {
            let l = &leaves[layer * TE_LAYER_BLOCKS.len()..(layer + 1) * TE_LAYER_BLOCKS.len()];
            let (wq, bq, wk, bk, wv, bv, wo, bo) = (l[0], l[1], l[2], l[3], l[4], l[5], l[6], l[7]);
            let (ln1_g, ln1_b, w1, b1, w2, b2, ln2_g, ln2_b) =
                (l[8], l[9], l[10], l[11], l[12], l[13], l[14], l[15]);

            let q = h.matmul(wq)?.add_bias(bq)?;
            let k = h.matmul(wk)?.add_bias(bk)?;
            let v = h.matmul(wv)?.add_bias(bv)?;
            let mut heads = Vec::with_capacity(self.heads);
            for a in 0..self.heads {
                let qh = q.slice_cols(a * dk, dk)?;
                let kh = k.slice_cols(a * dk, dk)?;
                let vh = v.slice_cols(a * dk, dk)?;
                let scores = qh.matmul(kh.transpose()?)?.affine(scale, 0.0)?.softmax(1)?;
                heads.push(scores.matmul(vh)?);
            }
            let attn = tape.concat_cols(&heads)?.matmul(wo)?.add_bias(bo)?;
            h = h.add(attn)?.layer_norm(ln1_g, ln1_b)?;

            let ff = h
                .matmul(w1)?
                .add_bias(b1)?
                .activation(Activation::Relu)?
                .matmul(w2)?
                .add_bias(b2)?;
            h = h.add(ff)?.layer_norm(ln2_g, ln2_b)?;
        }
        Ok(h.reduce(ReduceKind::Mean, 0)?)
    }

    /// Applies the output projection when the encoder has one.
    pub fn project<'t>(
        &self,
        _tape: &'t Tape,
        leaves: &[Tensor<'t>],
        hidden: Tensor<'t>,
    ) -> Result<Tensor<'t>, ModelError> {
        if self.projection.is_none() {
            return Ok(hidden);
        }
        let w = leaves[leaves.len() - 2];
        let b = leaves[leaves.len() - 1];
        Ok(hidden.matmul(w)?.add_bias(b)?)
    }

    pub(crate) fn from_parts(
        config: &EncoderConfig,
        input_dim: usize,
        output_dim: usize,
        params_by_name: &mut dyn FnMut(&str, usize, usize) -> Result<Mat, ModelError>,
    ) -> Result<Self, ModelError> {
        let hidden = config.hidden;
        let ff_dim = config.ff_dim.unwrap_or(4 * input_dim);
        let params = match config.kind {
            EncoderKind::WordLevel => EncoderParams::WordLevel,
            EncoderKind::BagOfWords => EncoderParams::Bow {
                wh: params_by_name("bow.w_h", input_dim, hidden)?,
                bh: params_by_name("bow.b_h", 1, hidden)?,
            },
            EncoderKind::Gru => EncoderParams::Gru {
                gates: GRU_GATES
                    .iter()
                    .map(|g| {
                        Ok(Gate {
                            w: params_by_name(&format!("gru.w_{g}"), input_dim, hidden)?,
                            u: params_by_name(&format!("gru.u_{g}"), hidden, hidden)?,
                            b: params_by_name(&format!("gru.b_{g}"), 1, hidden)?,
                        })
                    })
                    .collect::<Result<_, ModelError>>()?,
            },
            EncoderKind::Lstm => EncoderParams::Lstm {
                gates: LSTM_GATES
                    .iter()
                    .map(|g| {
                        Ok(Gate {
                            w: params_by_name(&format!("lstm.w_{g}"), input_dim, hidden)?,
                            u: params_by_name(&format!("lstm.u_{g}"), hidden, hidden)?,
                            b: params_by_name(&format!("lstm.b_{g}"), 1, hidden)?,
                        })
                    })
                    .collect::<Result<_, ModelError>>()?,
            },
            EncoderKind::Transformer => EncoderParams::Transformer {
                layers: (0..config.layers)
                    .map(|i| {
                        TE_LAYER_BLOCKS
                            .iter()
                            .map(|name| {
                                let (r, c) = te_block_shape(name, input_dim, ff_dim);
                                params_by_name(&format!("te.l{i}.{name}"), r, c)
                            })
                            .collect::<Result<Vec<Mat>, ModelError>>()
                    })
                    .collect::<Result<_, ModelError>>()?,
            },
        };
        let out_of_encoder = match config.kind {
            EncoderKind::WordLevel | EncoderKind::Transformer => input_dim,
            _ => hidden,
        };
        let needs_proj = match config.kind {
            EncoderKind::WordLevel => false,
            EncoderKind::Lstm | EncoderKind::Gru => out_of_encoder != output_dim,
            _ => true,
        };
        let projection = if needs_proj {
            Some((
                params_by_name("proj.w", out_of_encoder, output_dim)?,
                params_by_name("proj.b", 1, output_dim)?,
            ))
        } else {
            None
        };
        Ok(Self {
            kind: config.kind,
            input_dim,
            output_dim: if config.kind == EncoderKind::WordLevel {
                input_dim
            } else {
                output_dim
            },
            hidden,
            layers: config.layers,
            heads: config.heads,
            ff_dim,
            positional: config.positional,
            params,
            projection,
        })
    }
}

fn make_gates<R: Rng>(count: usize, input: usize, hidden: usize, rng: &mut R) -> Vec<Gate> {
    (0..count)
        .map(|_| Gate {
            w: Mat::glorot(input, hidden, rng),
            u: Mat::glorot(hidden, hidden, rng),
            b: Mat::zeros(1, hidden),
        })
        .collect()
}

fn te_block_shape(name: &str, c: usize, ff: usize) -> (usize, usize) {
    match name {
        "wq" | "wk" | "wv" | "wo" => (c, c),
        "w1" => (c, ff),
        "b1" => (1, ff),
        "w2" => (ff, c),
        _ => (1, c),
    }
}

fn make_te_layer<R: Rng>(c: usize, ff: usize, rng: &mut R) -> Vec<Mat> {
    TE_LAYER_BLOCKS
        .iter()
        .map(|name| {
            let (rows, cols) = te_block_shape(name, c, ff);
            match *name {
                "wq" | "wk" | "wv" | "wo" | "w1" | "w2" => Mat::glorot(rows, cols, rng),
                "ln1_g" | "ln2_g" => Mat::from_vec(rows, cols, vec![1.0; cols]),
                _ => Mat::zeros(rows, cols),
            }
        })
        .collect()
}

/// Fixed sinusoidal position matrix: even columns sine, odd columns cosine,
/// wavelengths geometric in 10000^(2i/d).
pub fn sinusoidal_positions(n: usize, d: usize) -> Mat {
    let mut pe = Mat::zeros(n, d);
    for pos in 0..n {
        for j in 0..d {
            let i = (j / 2) * 2;
            let angle = pos as f64 / 10000f64.powf(i as f64 / d as f64);
            pe.set(pos, j, if j % 2 == 0 { angle.sin() } else { angle.cos() });
        }
    }
    pe
}

/// Constant inputs for one forward pass: time-major padded step matrices for
/// the recurrent and bag-of-words encoders, per-sample token matrices for
/// the transformer.
#[derive(Clone, Debug)]
pub struct SequenceBatch {
    pub steps: Vec<Mat>,
    pub lengths: Vec<usize>,
    pub samples: Vec<Mat>,
}

impl SequenceBatch {
    /// Builds the representation the given encoder kind consumes, from one
    /// slice of token rows per sample. Right-pads with zero rows; the true
    /// lengths keep padding out of every prediction.
    pub fn build(kind: EncoderKind, samples: &[Vec<&[f64]>]) -> Self {
        assert!(!samples.is_empty(), "batch must not be empty");
        assert!(
            samples.iter().all(|s| !s.is_empty()),
            "every sample needs at least one token"
        );
        let dim = samples[0][0].len();
        let lengths: Vec<usize> = samples.iter().map(|s| s.len()).collect();
        if kind == EncoderKind::Transformer {
            let mats = samples
                .iter()
                .map(|rows| {
                    let mut data = Vec::with_capacity(rows.len() * dim);
                    for r in rows {
                        data.extend_from_slice(r);
                    }
                    Mat::from_vec(rows.len(), dim, data)
                })
                .collect();
            return Self {
                steps: Vec::new(),
                lengths,
                samples: mats,
            };
        }
        let max_len = *lengths.iter().max().expect("non-empty batch");
        let mut steps = Vec::with_capacity(max_len);
        for t in 0..max_len {
            let mut m = Mat::zeros(samples.len(), dim);
            for (i, rows) in samples.iter().enumerate() {
                if t < rows.len() {
                    m.row_mut(i).copy_from_slice(rows[t]);
                }
            }
            steps.push(m);
        }
        Self {
            steps,
            lengths,
            samples: Vec::new(),
        }
    }

    pub fn single(kind: EncoderKind, rows: &[&[f64]]) -> Self {
        Self::build(kind, &[rows.to_vec()])
    }

    pub fn len(&self) -> usize {
        self.lengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lengths.is_empty()
    }
}
