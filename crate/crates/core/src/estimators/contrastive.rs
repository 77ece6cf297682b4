//! Permutation-contrastive and generalized contrastive learning.
//!
//! Both discriminate true (observation, partner) pairs from pairs with a
//! resampled partner, using the regression function
//! `r = Σ_i ψ_i(h_i(x), partner_i)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::{AuxMode, Dataset};
use crate::error::{Error, Result};
use crate::estimators::config::{EpochMetrics, EstimatorResult, Method, TrainConfig};
use crate::estimators::tcl::compose_linear_ica;
use crate::estimators::train::{
    auc, ensure_finite_loss, minibatches, random_split, standardization, standardize, EarlyStopping, Model, ParamNodes,
};
use crate::numerics::{Activation, AdamState, Mlp, Tape, Tensor, Var};
use crate::rng::{self, StreamRng};

/// Hidden width of each `ψ_i`.
pub const PSI_HIDDEN: usize = 16;

/// How the auxiliary variable enters `ψ_i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AuxEncoding {
    /// `ψ_i(h_i(x), u)` with the whole (standardized) `u`.
    Raw,
    /// `ψ_i(h_i(x), h_i(u))`; `u` must live in observation space.
    Shared,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GclOptions {
    pub aux_encoding: AuxEncoding,
    /// Output nonlinearity of `h`.
    pub feature_activation: Activation,
    /// Follow training with linear ICA on the features.
    pub linear_unmixing: bool,
}

impl GclOptions {
    /// Defaults by auxiliary kind: segment labels mirror time-contrastive
    /// learning, lagged observations mirror permutation-contrastive learning.
    pub fn for_dataset(dataset: &Dataset) -> Self {
        match dataset.meta.aux_mode {
            Some(AuxMode::SegmentLabel) => GclOptions {
                aux_encoding: AuxEncoding::Raw,
                feature_activation: Activation::Abs,
                linear_unmixing: true,
            },
            Some(AuxMode::LaggedObservation) => GclOptions {
                aux_encoding: AuxEncoding::Shared,
                feature_activation: Activation::Identity,
                linear_unmixing: false,
            },
            None => GclOptions {
                aux_encoding: AuxEncoding::Raw,
                feature_activation: Activation::Identity,
                linear_unmixing: false,
            },
        }
    }
}

type NegativeSampler<'a> = Box<dyn Fn(&[usize], &mut StreamRng) -> Vec<usize> + 'a>;
type PartnerFeature = Box<dyn Fn(&mut Tape, usize) -> Result<Var>>;

/// A binary pair-discrimination problem over row indices.
struct PairTask<'a> {
    /// Standardized observations.
    x: &'a Tensor,
    /// Rows the partners are drawn from.
    partner: &'a Tensor,
    encode_partner: bool,
    /// `(anchor, true partner)` row pairs.
    positives: Vec<(usize, usize)>,
    /// Draws a negative partner for each anchor.
    negatives: NegativeSampler<'a>,
}

struct Batch {
    anchors: Vec<usize>,
    pos: Vec<usize>,
    neg: Vec<usize>,
}

impl PairTask<'_> {
    fn batch(&self, idx: &[usize], neg: Vec<usize>) -> Batch {
        Batch {
            anchors: idx.iter().map(|&i| self.positives[i].0).collect(),
            pos: idx.iter().map(|&i| self.positives[i].1).collect(),
            neg,
        }
    }

    fn draw(&self, idx: &[usize], rng: &mut StreamRng) -> Batch {
        let anchors: Vec<usize> = idx.iter().map(|&i| self.positives[i].0).collect();
        let neg = (self.negatives)(&anchors, rng);
        self.batch(idx, neg)
    }

    /// Logits for `[positives; negatives]`, a `2B × 1` column.
    fn logits(&self, model: &Model, tape: &mut Tape, nodes: &mut ParamNodes, b: &Batch) -> Result<Var> {
        let n = b.anchors.len();
        let dz = model.nets[0].output_dim();
        let xa = self.x.select_rows(&b.anchors);
        let (anchor_feats, partner_of): (Var, PartnerFeature) = if self.encode_partner {
            let stacked = Tensor::vcat(&[
                &xa,
                &self.partner.select_rows(&b.pos),
                &self.partner.select_rows(&b.neg),
            ])?;
            let input = tape.constant(stacked);
            let h = nodes.forward(model, tape, 0, input)?;
            let a = tape.row_slice(h, 0, n)?;
            let p = tape.row_slice(h, n, 3 * n)?;
            (a, Box::new(move |tape: &mut Tape, i| tape.col_slice(p, i, i + 1)))
        } else {
            let input = tape.constant(xa);
            let a = nodes.forward(model, tape, 0, input)?;
            let u = Tensor::vcat(&[&self.partner.select_rows(&b.pos), &self.partner.select_rows(&b.neg)])?;
            let u = tape.constant(u);
            (a, Box::new(move |_: &mut Tape, _| Ok(u)))
        };
        let doubled = tape.vcat(&[anchor_feats, anchor_feats])?;
        let mut total: Option<Var> = None;
        for i in 0..dz {
            let hi = tape.col_slice(doubled, i, i + 1)?;
            let other = partner_of(tape, i)?;
            let pair = tape.hcat(&[hi, other])?;
            let out = nodes.forward(model, tape, 1 + i, pair)?;
            total = Some(match total {
                None => out,
                Some(t) => tape.add(t, out)?,
            });
        }
        Ok(total.expect("at least one component"))
    }
}

fn targets(n: usize) -> Vec<f64> {
    let mut t = vec![1.0; n];
    t.extend(std::iter::repeat_n(0.0, n));
    t
}

fn train_pairs(
    task: PairTask<'_>,
    cfg: &TrainConfig,
    feature_activation: Activation,
    mut rng: StreamRng,
) -> Result<(Mlp, Vec<EpochMetrics>, usize)> {
    let d = task.x.cols();
    let dz = cfg.components(d)?;
    let psi_in = if task.encode_partner {
        2
    } else {
        1 + task.partner.cols()
    };
    let mut nets = vec![Mlp::random(
        d,
        &cfg.hidden,
        dz,
        cfg.hidden_activation(),
        feature_activation,
        &mut rng,
    )?];
    for _ in 0..dz {
        nets.push(Mlp::random(
            psi_in,
            &[PSI_HIDDEN],
            1,
            cfg.hidden_activation(),
            Activation::Identity,
            &mut rng,
        )?);
    }
    let mut model = Model { nets };
    let all: Vec<usize> = (0..task.positives.len()).collect();
    let (train, held) = random_split(&all, &mut rng);
    let held_batch = task.draw(&held, &mut rng);
    let held_targets = targets(held.len());

    let mut adam = AdamState::new(cfg.learning_rate);
    let mut stop = EarlyStopping::new(cfg.patience);
    let mut history = Vec::new();
    for epoch in 0..cfg.epochs {
        // fresh negatives every epoch
        let order = minibatches(&train, cfg.batch_size, &mut rng);
        let mut total = 0.0;
        for idx in order {
            let b = task.draw(&idx, &mut rng);
            let mut tape = Tape::new();
            let mut nodes = ParamNodes::new(1 + dz);
            let logits = task.logits(&model, &mut tape, &mut nodes, &b)?;
            let loss = tape.bce_with_logits(logits, &targets(idx.len()))?;
            let value = tape.value(loss).get(0, 0);
            ensure_finite_loss(value, epoch)?;
            let grads = nodes.gradients(&model, &tape, loss)?;
            model.step(&mut adam, &grads)?;
            total += value * idx.len() as f64;
        }
        let mut tape = Tape::new();
        let mut nodes = ParamNodes::new(1 + dz);
        let logits = task.logits(&model, &mut tape, &mut nodes, &held_batch)?;
        let loss = tape.bce_with_logits(logits, &held_targets)?;
        let heldout_loss = tape.value(loss).get(0, 0);
        ensure_finite_loss(heldout_loss, epoch)?;
        let scores = tape.value(logits).data();
        let (pos, neg) = scores.split_at(held.len());
        let correct = pos.iter().filter(|&&v| v > 0.0).count() + neg.iter().filter(|&&v| v <= 0.0).count();
        history.push(EpochMetrics {
            epoch,
            loss: total / train.len() as f64,
            heldout_loss: Some(heldout_loss),
            accuracy: Some(correct as f64 / scores.len() as f64),
            auc: Some(auc(pos, neg)),
            log_likelihood: None,
        });
        if stop.update(epoch, heldout_loss, &model) {
            break;
        }
    }
    let best_epoch = stop.best_epoch;
    let h = stop.best.expect("at least one epoch").nets.swap_remove(0);
    Ok((h, history, best_epoch))
}

fn finish(
    mut h: Mlp,
    dataset: &Dataset,
    mean: &[f64],
    std: &[f64],
    history: Vec<EpochMetrics>,
    best_epoch: usize,
    method: Method,
) -> Result<EstimatorResult> {
    h.absorb_input_standardization(mean, std)?;
    let z = h.forward(&dataset.x)?;
    Ok(EstimatorResult {
        method,
        extractor: h,
        z,
        features: None,
        history,
        best_epoch,
        ica_converged: None,
    })
}

/// Uniform index in `0..n` outside `exclude`.
fn draw_excluding(n: usize, exclude: [usize; 2], rng: &mut StreamRng) -> usize {
    loop {
        let c = rng.random_range(0..n);
        if !exclude.contains(&c) {
            return c;
        }
    }
}

/// Permutation-contrastive learning: `(x(t), x(t−1))` against
/// `(x(t), x(t*))` with `t*` uniform outside `{t, t−1}`.
pub fn train_pcl(dataset: &Dataset, cfg: &TrainConfig) -> Result<EstimatorResult> {
    cfg.validate()?;
    dataset.validate()?;
    let t = dataset.len();
    if t < 3 {
        return Err(Error::Contract(format!(
            "permutation-contrastive learning needs T >= 3, got {t}"
        )));
    }
    let (mean, std) = standardization(&dataset.x)?;
    let xs = standardize(&dataset.x, &mean, &std);
    let task = PairTask {
        x: &xs,
        partner: &xs,
        encode_partner: true,
        positives: (1..t).map(|i| (i, i - 1)).collect(),
        negatives: Box::new(move |anchors, rng| anchors.iter().map(|&a| draw_excluding(t, [a, a - 1], rng)).collect()),
    };
    let (h, history, best) = train_pairs(task, cfg, Activation::Identity, rng::stream(cfg.seed))?;
    finish(h, dataset, &mean, &std, history, best, Method::Pcl)
}

/// Generalized contrastive learning with options chosen from the dataset's
/// auxiliary kind; see [`GclOptions::for_dataset`].
pub fn train_gcl(dataset: &Dataset, cfg: &TrainConfig) -> Result<EstimatorResult> {
    train_gcl_with(dataset, cfg, GclOptions::for_dataset(dataset))
}

/// Generalized contrastive learning: `(x, u)` against `(x, u*)` where `u*`
/// comes from a fresh permutation of the auxiliary rows.
pub fn train_gcl_with(dataset: &Dataset, cfg: &TrainConfig, opts: GclOptions) -> Result<EstimatorResult> {
    cfg.validate()?;
    dataset.validate()?;
    let aux = dataset
        .aux
        .as_ref()
        .ok_or_else(|| Error::Contract("generalized contrastive learning requires an auxiliary variable".into()))?;
    let t = dataset.len();
    if t < 3 {
        return Err(Error::Contract(format!(
            "generalized contrastive learning needs T >= 3, got {t}"
        )));
    }
    let (mean, std) = standardization(&dataset.x)?;
    let xs = standardize(&dataset.x, &mean, &std);
    let us = match opts.aux_encoding {
        AuxEncoding::Shared => {
            if aux.cols() != dataset.obs_dim() {
                return Err(Error::dim(
                    "shared-encoder auxiliary width",
                    dataset.obs_dim(),
                    aux.cols(),
                ));
            }
            standardize(aux, &mean, &std)
        }
        AuxEncoding::Raw => {
            let (am, asd) = standardization(aux)
                .map_err(|_| Error::Degenerate("auxiliary variable has a constant column".into()))?;
            standardize(aux, &am, &asd)
        }
    };
    let task = PairTask {
        x: &xs,
        partner: &us,
        encode_partner: opts.aux_encoding == AuxEncoding::Shared,
        positives: (0..t).map(|i| (i, i)).collect(),
        negatives: Box::new(move |anchors, rng| {
            let p = rng::permutation(t, rng);
            anchors.iter().map(|&a| p[a]).collect()
        }),
    };
    let (h, history, best) = train_pairs(task, cfg, opts.feature_activation, rng::stream(cfg.seed))?;
    let res = finish(h, dataset, &mean, &std, history, best, Method::Gcl)?;
    if opts.linear_unmixing {
        compose_linear_ica(res, &dataset.x, rng::derive_seed(cfg.seed, 1))
    } else {
        Ok(res)
    }
}
