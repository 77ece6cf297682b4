use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor, Unary, Var};

/// Layer nonlinearities available to networks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    Identity,
    LeakyRelu {
        slope: f64,
    },
    Tanh,
    /// Smooth strictly-increasing leaky nonlinearity; see [`Unary::LeakySoft`].
    LeakySoft {
        slope: f64,
    },
    Abs,
}

impl Activation {
    pub const DEFAULT_SLOPE: f64 = 0.2;

    pub fn leaky_relu() -> Self {
        Activation::LeakyRelu {
            slope: Self::DEFAULT_SLOPE,
        }
    }

    pub fn unary(self) -> Unary {
        match self {
            Activation::Identity => Unary::Identity,
            Activation::LeakyRelu { slope } => Unary::LeakyRelu { slope },
            Activation::Tanh => Unary::Tanh,
            Activation::LeakySoft { slope } => Unary::LeakySoft { slope },
            Activation::Abs => Unary::Abs,
        }
    }

    fn validate(self) -> Result<()> {
        match self {
            Activation::LeakyRelu { slope } | Activation::LeakySoft { slope } if !(slope > 0.0 && slope < 1.0) => Err(
                Error::Config(format!("activation slope must lie in (0, 1), got {slope}")),
            ),
            _ => Ok(()),
        }
    }
}

/// One affine layer `act(x·W + b)` acting on row-vector batches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Layer {
    /// `in × out`
    pub weight: Tensor,
    /// `1 × out`
    pub bias: Tensor,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMlp", into = "RawMlp")]
pub struct Mlp {
    layers: Vec<Layer>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMlp {
    layers: Vec<Layer>,
}

impl TryFrom<RawMlp> for Mlp {
    type Error = Error;

    fn try_from(raw: RawMlp) -> Result<Self> {
        Mlp::from_layers(raw.layers)
    }
}

impl From<Mlp> for RawMlp {
    fn from(m: Mlp) -> Self {
        RawMlp { layers: m.layers }
    }
}

impl Mlp {
    /// Validates dimensions and finiteness.
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Contract("network needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.rows() != 1 || l.bias.cols() != l.weight.cols() {
                return Err(Error::dim(
                    format!("layer {i} bias"),
                    format!("1x{}", l.weight.cols()),
                    format!("{}x{}", l.bias.rows(), l.bias.cols()),
                ));
            }
            if i > 0 && layers[i - 1].weight.cols() != l.weight.rows() {
                return Err(Error::dim(
                    format!("layer {i} input"),
                    layers[i - 1].weight.cols(),
                    l.weight.rows(),
                ));
            }
            l.weight.ensure_finite(&format!("layer {i} weight"))?;
            l.bias.ensure_finite(&format!("layer {i} bias"))?;
            l.activation.validate()?;
        }
        Ok(Mlp { layers })
    }

    /// Randomly initialised network with scaled-uniform weights and zero biases.
    pub fn random<R: Rng + ?Sized>(
        input_dim: usize,
        hidden: &[usize],
        output_dim: usize,
        hidden_activation: Activation,
        output_activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let mut dims = vec![input_dim];
        dims.extend_from_slice(hidden);
        dims.push(output_dim);
        if dims.contains(&0) {
            return Err(Error::Config(format!("layer widths must be positive, got {dims:?}")));
        }
        let n = dims.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let (fan_in, fan_out) = (dims[i], dims[i + 1]);
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let dist = Uniform::new(-bound, bound).expect("positive bound");
                let weight = Tensor::from_fn(fan_in, fan_out, |_, _| dist.sample(rng));
                Layer {
                    weight,
                    bias: Tensor::zeros(1, fan_out),
                    activation: if i + 1 == n {
                        output_activation
                    } else {
                        hidden_activation
                    },
                }
            })
            .collect();
        Self::from_layers(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].weight.cols()
    }

    /// Inference-mode forward pass over a `batch × input_dim` tensor.
    pub fn forward(&self, batch: &Tensor) -> Result<Tensor> {
        if batch.cols() != self.input_dim() {
            return Err(Error::dim("mlp input", self.input_dim(), batch.cols()));
        }
        let mut h = batch.clone();
        for (i, l) in self.layers.iter().enumerate() {
            let f = l.activation.unary();
            h = h.matmul(&l.weight)?.add_row(&l.bias)?.map(|v| f.apply(v));
            h.ensure_finite(&format!("layer {i} output"))?;
        }
        Ok(h)
    }

    /// Training-mode forward pass recorded on `tape`.
    ///
    /// Returns the output node and the parameter nodes in [`Mlp::params`] order.
    pub fn forward_tape(&self, tape: &mut Tape, input: Var) -> Result<(Var, Vec<Var>)> {
        let cols = tape.value(input).cols();
        if cols != self.input_dim() {
            return Err(Error::dim("mlp input", self.input_dim(), cols));
        }
        let mut params = Vec::with_capacity(2 * self.layers.len());
        let mut h = input;
        for (i, l) in self.layers.iter().enumerate() {
            let w = tape.param(l.weight.clone());
            let b = tape.param(l.bias.clone());
            params.push(w);
            params.push(b);
            let lin = tape.matmul(h, w)?;
            let pre = tape.add_row(lin, b)?;
            h = tape.map(pre, l.activation.unary());
            tape.value(h).ensure_finite(&format!("layer {i} output"))?;
        }
        Ok((h, params))
    }

    /// Weights and biases, layer by layer.
    pub fn params(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    /// Folds a per-input affine standardisation `(x − mean) / scale` into
    /// the first layer, so the network accepts raw inputs.
    pub fn absorb_input_standardization(&mut self, mean: &[f64], scale: &[f64]) -> Result<()> {
        let first = &mut self.layers[0];
        let n_in = first.weight.rows();
        if mean.len() != n_in || scale.len() != n_in {
            return Err(Error::dim("input standardization", n_in, mean.len().min(scale.len())));
        }
        for j in 0..first.weight.cols() {
            let mut shift = 0.0;
            for i in 0..n_in {
                let w = first.weight.get(i, j) / scale[i];
                first.weight.set(i, j, w);
                shift += mean[i] * w;
            }
            let b = first.bias.get(0, j) - shift;
            first.bias.set(0, j, b);
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parses and validates a JSON weight file.
    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}
