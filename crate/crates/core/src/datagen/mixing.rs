//! Invertible leaky-ReLU mixing networks with closed-form inverses.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::numerics::{linalg, Tensor};
use crate::rng;

const MAX_DRAWS: usize = 1000;

fn default_slope() -> f64 {
    0.2
}

fn default_condition_bound() -> f64 {
    10.0
}

/// Construction parameters for a [`MixingNetwork`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixingSpec {
    /// Number of square linear layers; 0 is the identity, 1 is linear mixing.
    pub n_layers: usize,
    #[serde(default = "default_condition_bound")]
    pub condition_bound: f64,
    /// Leaky-ReLU slope between layers.
    #[serde(default = "default_slope")]
    pub slope: f64,
}

impl Default for MixingSpec {
    fn default() -> Self {
        MixingSpec {
            n_layers: 2,
            condition_bound: default_condition_bound(),
            slope: default_slope(),
        }
    }
}

/// `f(s) = W_L σ(… σ(W_1 s))` with leaky-ReLU `σ` between layers and an
/// identity activation on the last layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMixing", into = "RawMixing")]
pub struct MixingNetwork {
    d: usize,
    weights: Vec<Tensor>,
    inverses: Vec<Tensor>,
    slope: f64,
    condition_bound: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMixing {
    d: usize,
    weights: Vec<Tensor>,
    slope: f64,
    condition_bound: f64,
}

impl TryFrom<RawMixing> for MixingNetwork {
    type Error = Error;

    fn try_from(raw: RawMixing) -> Result<Self> {
        MixingNetwork::from_weights(raw.d, raw.weights, raw.slope, raw.condition_bound)
    }
}

impl From<MixingNetwork> for RawMixing {
    fn from(m: MixingNetwork) -> Self {
        RawMixing {
            d: m.d,
            weights: m.weights,
            slope: m.slope,
            condition_bound: m.condition_bound,
        }
    }
}

impl MixingNetwork {
    /// Validates conditioning and precomputes inverses.
    pub fn from_weights(d: usize, weights: Vec<Tensor>, slope: f64, condition_bound: f64) -> Result<Self> {
        if !(slope > 0.0 && slope < 1.0) {
            return Err(Error::Config(format!("mixing slope must lie in (0, 1), got {slope}")));
        }
        let mut inverses = Vec::with_capacity(weights.len());
        for (i, w) in weights.iter().enumerate() {
            if w.shape() != (d, d) {
                return Err(Error::dim(
                    format!("mixing layer {i}"),
                    format!("{d}x{d}"),
                    format!("{:?}", w.shape()),
                ));
            }
            let cond = linalg::condition_number(w);
            if cond > condition_bound * (1.0 + 1e-9) {
                return Err(Error::Config(format!(
                    "mixing layer {i} has condition number {cond:.3} > {condition_bound}"
                )));
            }
            inverses.push(linalg::inverse(w)?);
        }
        Ok(MixingNetwork {
            d,
            weights,
            inverses,
            slope,
            condition_bound,
        })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[Tensor] {
        &self.weights
    }

    pub fn slope(&self) -> f64 {
        self.slope
    }

    fn check(&self, t: &Tensor) -> Result<()> {
        if t.cols() != self.d {
            return Err(Error::dim("mixing input", self.d, t.cols()));
        }
        Ok(())
    }

    /// Maps rows of sources to rows of observations.
    pub fn forward(&self, s: &Tensor) -> Result<Tensor> {
        self.check(s)?;
        let last = self.weights.len().saturating_sub(1);
        let mut h = s.clone();
        for (i, w) in self.weights.iter().enumerate() {
            h = h.matmul_nt(w)?;
            if i < last {
                let a = self.slope;
                h = h.map(|v| if v > 0.0 { v } else { a * v });
            }
        }
        Ok(h)
    }

    /// Closed-form `f⁻¹`.
    pub fn inverse(&self, x: &Tensor) -> Result<Tensor> {
        self.check(x)?;
        let last = self.weights.len().saturating_sub(1);
        let mut h = x.clone();
        for (i, w_inv) in self.inverses.iter().enumerate().rev() {
            if i < last {
                let a = self.slope;
                h = h.map(|v| if v > 0.0 { v } else { v / a });
            }
            h = h.matmul_nt(w_inv)?;
        }
        Ok(h)
    }
}

/// Draws a condition-bounded mixing network.
///
/// Each weight is a Gaussian matrix scaled by `1/√d`, redrawn until its
/// condition number is within `condition_bound`. A bound of exactly 1 only
/// admits scaled orthogonal matrices, which are drawn directly.
pub fn build_mixing(d: usize, n_layers: usize, condition_bound: f64, seed: u64) -> Result<MixingNetwork> {
    build_mixing_with(
        d,
        &MixingSpec {
            n_layers,
            condition_bound,
            slope: default_slope(),
        },
        seed,
    )
}

pub fn build_mixing_with(d: usize, spec: &MixingSpec, seed: u64) -> Result<MixingNetwork> {
    if d == 0 {
        return Err(Error::Config("mixing dimension must be positive".into()));
    }
    if !(spec.condition_bound >= 1.0) {
        return Err(Error::Config(format!(
            "condition bound must be at least 1, got {}",
            spec.condition_bound
        )));
    }
    let mut rng = rng::stream(seed);
    let scale = 1.0 / (d as f64).sqrt();
    let mut weights = Vec::with_capacity(spec.n_layers);
    for layer in 0..spec.n_layers {
        let w = if spec.condition_bound == 1.0 {
            linalg::random_orthogonal(d, &mut rng)
        } else {
            let mut accepted = None;
            for _ in 0..MAX_DRAWS {
                let cand = Tensor::from_fn(d, d, |_, _| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z * scale
                });
                if linalg::condition_number(&cand) <= spec.condition_bound {
                    accepted = Some(cand);
                    break;
                }
            }
            accepted.ok_or_else(|| {
                Error::Config(format!(
                    "no {d}x{d} weight with condition number <= {} in {MAX_DRAWS} draws (layer {layer})",
                    spec.condition_bound
                ))
            })?
        };
        weights.push(w);
    }
    MixingNetwork::from_weights(d, weights, spec.slope, spec.condition_bound)
}

/// Replaces the observations with `f(s_true)`, keeping every other field.
pub fn apply_mixing(net: &MixingNetwork, dataset: &Dataset) -> Result<Dataset> {
    let s = dataset
        .s_true
        .as_ref()
        .ok_or_else(|| Error::Contract("mixing requires ground-truth sources".into()))?;
    if s.cols() != net.dim() {
        return Err(Error::dim("mixing input", net.dim(), s.cols()));
    }
    let mut out = dataset.clone();
    out.x = net.forward(s)?;
    out.x.ensure_finite("mixed observations")?;
    out.meta.mixing = Some(net.clone());
    Ok(out)
}
