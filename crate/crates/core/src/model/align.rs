//! The alignment map M from textual space into the grounded space.

use rand::Rng;

use super::ModelError;
use crate::mat::Mat;
use crate::tensor::{Activation, Tape, Tensor};

/// Shape of the alignment: an activation kind and a layer count.
///
/// The default is a single bias-free linear layer, which keeps the map exactly
/// additive and homogeneous; nonlinear configurations get a bias per layer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlignConfig {
    pub activation: Activation,
    pub layers: usize,
}

impl Default for AlignConfig {
    fn default() -> Self {
        Self {
            activation: Activation::Identity,
            layers: 1,
        }
    }
}

impl AlignConfig {
    /// Parses canonical names like `linear:1`, `relu:1`, `lrelu:2`.
    /// `leaky_alpha` is the negative slope used when the kind is `lrelu`.
    pub fn parse(spec: &str, leaky_alpha: f64) -> Result<Self, ModelError> {
        let bad = || ModelError::BadAlignSpec {
            spec: spec.to_string(),
        };
        let (kind, layers) = match spec.split_once(':') {
            Some((k, l)) => (k, l.parse::<usize>().map_err(|_| bad())?),
            None => (spec, 1),
        };
        if layers == 0 {
            return Err(bad());
        }
        let activation = match kind {
            "linear" | "identity" => Activation::Identity,
            "relu" => Activation::Relu,
            "lrelu" | "leaky_relu" => Activation::LeakyRelu(leaky_alpha),
            "tanh" => Activation::Tanh,
            "sigmoid" => Activation::Sigmoid,
            _ => return Err(bad()),
        };
        if let Activation::LeakyRelu(alpha) = activation {
            if alpha <= 0.0 {
                return Err(bad());
            }
        }
        Ok(Self { activation, layers })
    }

    pub fn canonical_name(&self) -> String {
        let kind = match self.activation {
            Activation::Identity => "linear",
            Activation::Relu => "relu",
            Activation::LeakyRelu(_) => "lrelu",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
        };
        format!("{kind}:{}", self.layers)
    }

    pub fn leaky_alpha(&self) -> Option<f64> {
        match self.activation {
            Activation::LeakyRelu(a) => Some(a),
            _ => None,
        }
    }
}

#[derive(Clone, Debug)]
struct AlignLayer {
    weight: Mat,
    bias: Option<Mat>,
    activation: Activation,
}

/// The learned map from d-dimensional textual vectors to c-dimensional
/// grounded vectors: one or more (weight, activation) layers applied to row
/// vectors. The first layer is d x c, any further layers are c x c.
#[derive(Clone, Debug)]
pub struct AlignmentMap {
    layers: Vec<AlignLayer>,
    input_dim: usize,
    output_dim: usize,
}

impl AlignmentMap {
    pub fn new<R: Rng>(
        config: &AlignConfig,
        input_dim: usize,
        output_dim: usize,
        rng: &mut R,
    ) -> Result<Self, ModelError> {
        if config.layers == 0 {
            return Err(ModelError::BadAlignSpec {
                spec: config.canonical_name(),
            });
        }
        let mut layers = Vec::with_capacity(config.layers);
        for i in 0..config.layers {
            let rows = if i == 0 { input_dim } else { output_dim };
            let bias = if config.activation.is_identity() {
                None
            } else {
                Some(Mat::zeros(1, output_dim))
            };
            layers.push(AlignLayer {
                weight: Mat::glorot(rows, output_dim, rng),
                bias,
                activation: config.activation,
            });
        }
        Ok(Self {
            layers,
            input_dim,
            output_dim,
        })
    }

    /// Single identity layer; grounding through it is a no-op.
    pub fn identity(dim: usize) -> Self {
        Self::from_weight(Mat::identity(dim))
    }

    /// Single bias-free linear layer with the given weight matrix.
    pub fn from_weight(weight: Mat) -> Self {
        let (input_dim, output_dim) = (weight.rows(), weight.cols());
        Self {
            layers: vec![AlignLayer {
                weight,
                bias: None,
                activation: Activation::Identity,
            }],
            input_dim,
            output_dim,
        }
    }

    pub(crate) fn from_parts(
        config: &AlignConfig,
        weights: Vec<Mat>,
        biases: Vec<Option<Mat>>,
    ) -> Self {
        let input_dim = weights[0].rows();
        let output_dim = weights[0].cols();
        let layers = weights
            .into_iter()
            .zip(biases)
            .map(|(weight, bias)| AlignLayer {
                weight,
                bias,
                activation: config.activation,
            })
            .collect();
        Self {
            layers,
            input_dim,
            output_dim,
        }
    }

    pub fn config(&self) -> AlignConfig {
        AlignConfig {
            activation: self.layers[0].activation,
            layers: self.layers.len(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn block_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| 1 + usize::from(l.bias.is_some()))
            .sum()
    }

    pub fn blocks(&self) -> Vec<(String, &Mat)> {
        let mut out = Vec::with_capacity(self.block_count());
        for (i, layer) in self.layers.iter().enumerate() {
            out.push((format!("align.l{i}.w"), &layer.weight));
            if let Some(b) = &layer.bias {
                out.push((format!("align.l{i}.b"), b));
            }
        }
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<(String, &mut Mat)> {
        let mut out = Vec::with_capacity(self.layers.len() * 2);
        for (i, layer) in self.layers.iter_mut().enumerate() {
            out.push((format!("align.l{i}.w"), &mut layer.weight));
            if let Some(b) = &mut layer.bias {
                out.push((format!("align.l{i}.b"), b));
            }
        }
        out
    }

    /// Maps one textual vector; the plain, no-gradient path used for
    /// grounding whole vocabularies.
    pub fn apply(&self, t: &[f64]) -> Result<Vec<f64>, ModelError> {
        if t.len() != self.input_dim {
            return Err(ModelError::DimMismatch {
                what: "alignment input",
                expected: self.input_dim,
                got: t.len(),
            });
        }
        let mut x = t.to_vec();
        for layer in &self.layers {
            let w = &layer.weight;
            let mut y = vec![0.0; w.cols()];
            for (i, &xi) in x.iter().enumerate() {
                let row = w.row(i);
                for (j, yj) in y.iter_mut().enumerate() {
                    *yj += xi * row[j];
                }
            }
            if let Some(b) = &layer.bias {
                for (j, yj) in y.iter_mut().enumerate() {
                    *yj += b.get(0, j);
                }
            }
            if !layer.activation.is_identity() {
                for v in &mut y {
                    *v = layer.activation.eval(*v);
                }
            }
            x = y;
        }
        Ok(x)
    }

    /// Tape forward over a whole B x d batch; `leaves` mirror `blocks()`.
    pub fn forward<'t>(
        &self,
        _tape: &'t Tape,
        leaves: &[Tensor<'t>],
        x: Tensor<'t>,
    ) -> Result<Tensor<'t>, ModelError> {
        assert_eq!(leaves.len(), self.block_count(), "one leaf per block");
        let mut h = x;
        let mut it = leaves.iter();
        for layer in &self.layers {
            let w = *it.next().expect("weight leaf");
            h = h.matmul(w)?;
            if layer.bias.is_some() {
                let b = *it.next().expect("bias leaf");
                h = h.add_bias(b)?;
            }
            if !layer.activation.is_identity() {
                h = h.activation(layer.activation)?;
            }
        }
        Ok(h)
    }
}
