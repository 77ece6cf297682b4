//! Pieces shared by the contrastive trainers.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{AdamState, Mlp, Tape, Tensor, Var};
use crate::rng;

/// Share of the data held out for early stopping and pretext scores.
pub const HELDOUT_FRACTION: f64 = 0.1;

/// Per-column mean and standard deviation; constant columns are an error.
pub(crate) fn standardization(x: &Tensor) -> Result<(Vec<f64>, Vec<f64>)> {
    let mean = x.col_means().into_data();
    let std = x.col_stds().into_data();
    for (j, &s) in std.iter().enumerate() {
        if !(s > 1e-12 * (1.0 + mean[j].abs())) {
            return Err(Error::Degenerate(format!("observation column {j} is constant")));
        }
    }
    Ok((mean, std))
}

pub(crate) fn standardize(x: &Tensor, mean: &[f64], std: &[f64]) -> Tensor {
    Tensor::from_fn(x.rows(), x.cols(), |i, j| (x.get(i, j) - mean[j]) / std[j])
}

/// Splits indices into (train, held-out) with about `HELDOUT_FRACTION`
/// of every label group held out.
pub(crate) fn stratified_split<R: Rng + ?Sized>(labels: &[usize], rng: &mut R) -> (Vec<usize>, Vec<usize>) {
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut groups = vec![Vec::new(); k];
    for (i, &l) in labels.iter().enumerate() {
        groups[l].push(i);
    }
    let (mut train, mut held) = (Vec::new(), Vec::new());
    for g in groups {
        let p = rng::permutation(g.len(), rng);
        let n_held = ((g.len() as f64 * HELDOUT_FRACTION).round() as usize).min(g.len().saturating_sub(1));
        for (r, &pi) in p.iter().enumerate() {
            if r < n_held {
                held.push(g[pi]);
            } else {
                train.push(g[pi]);
            }
        }
    }
    train.sort_unstable();
    held.sort_unstable();
    (train, held)
}

/// Random (train, held-out) split of the given candidate indices.
pub(crate) fn random_split<R: Rng + ?Sized>(candidates: &[usize], rng: &mut R) -> (Vec<usize>, Vec<usize>) {
    let n = candidates.len();
    let n_held = ((n as f64 * HELDOUT_FRACTION).round() as usize).clamp(1, n.saturating_sub(1).max(1));
    let p = rng::permutation(n, rng);
    let mut held: Vec<usize> = p[..n_held].iter().map(|&i| candidates[i]).collect();
    let mut train: Vec<usize> = p[n_held..].iter().map(|&i| candidates[i]).collect();
    held.sort_unstable();
    train.sort_unstable();
    (train, held)
}

/// Shuffled minibatches covering `indices` once.
pub(crate) fn minibatches<R: Rng + ?Sized>(indices: &[usize], batch: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let p = rng::permutation(indices.len(), rng);
    p.chunks(batch.max(1))
        .map(|c| c.iter().map(|&i| indices[i]).collect())
        .collect()
}

/// Area under the ROC curve by the Mann–Whitney statistic (ties count half).
pub fn auc(positive: &[f64], negative: &[f64]) -> f64 {
    if positive.is_empty() || negative.is_empty() {
        return 0.5;
    }
    let mut all: Vec<(f64, bool)> = positive
        .iter()
        .map(|&v| (v, true))
        .chain(negative.iter().map(|&v| (v, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += r * all[i..=j].iter().filter(|e| e.1).count() as f64;
        i = j + 1;
    }
    let (np, nn) = (positive.len() as f64, negative.len() as f64);
    (rank_sum - np * (np + 1.0) / 2.0) / (np * nn)
}

/// Several networks trained jointly with one optimizer.
#[derive(Debug, Clone)]
pub(crate) struct Model {
    pub nets: Vec<Mlp>,
}

impl Model {
    /// Records every network's parameters on `tape`; the returned vector
    /// lists the parameter nodes in a fixed order.
    pub fn forward_net(&self, tape: &mut Tape, net: usize, input: Var, params: &mut Vec<Var>) -> Result<Var> {
        let (out, p) = self.nets[net].forward_tape(tape, input)?;
        params.extend(p);
        Ok(out)
    }

    /// Applies an Adam step given gradients for every parameter, grouped per
    /// network in [`Mlp::params`] order.
    pub fn step(&mut self, adam: &mut AdamState, grads: &[Tensor]) -> Result<()> {
        let mut ps: Vec<&mut Tensor> = self.nets.iter_mut().flat_map(|n| n.params_mut()).collect();
        adam.step(&mut ps, grads)
    }
}

/// Per-network parameter nodes; one network may be applied several times,
/// in which case adjoints from each application are summed.
pub(crate) struct ParamNodes {
    per_net: Vec<Vec<Vec<Var>>>,
}

impl ParamNodes {
    pub fn new(n_nets: usize) -> Self {
        ParamNodes {
            per_net: vec![Vec::new(); n_nets],
        }
    }

    pub fn forward(&mut self, model: &Model, tape: &mut Tape, net: usize, input: Var) -> Result<Var> {
        let mut p = Vec::new();
        let out = model.forward_net(tape, net, input, &mut p)?;
        self.per_net[net].push(p);
        Ok(out)
    }

    /// Gradients ordered as in [`Model::step`].
    pub fn gradients(&self, model: &Model, tape: &Tape, loss: Var) -> Result<Vec<Tensor>> {
        let g = tape.backward(loss)?;
        let mut out = Vec::new();
        for (n, uses) in self.per_net.iter().enumerate() {
            let params = model.nets[n].params();
            for (k, p) in params.iter().enumerate() {
                let mut acc = Tensor::zeros(p.rows(), p.cols());
                for vars in uses {
                    acc.axpy(1.0, g.get(vars[k]).expect("parameter adjoint"))?;
                }
                out.push(acc);
            }
        }
        Ok(out)
    }
}

/// Tracks the best held-out loss and signals when patience runs out.
pub(crate) struct EarlyStopping<T> {
    patience: usize,
    best_loss: f64,
    pub best_epoch: usize,
    pub best: Option<T>,
    stale: usize,
}

impl<T: Clone> EarlyStopping<T> {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best_loss: f64::INFINITY,
            best_epoch: 0,
            best: None,
            stale: 0,
        }
    }

    /// Returns true when training should stop.
    pub fn update(&mut self, epoch: usize, loss: f64, state: &T) -> bool {
        if loss < self.best_loss || self.best.is_none() {
            self.best_loss = loss;
            self.best_epoch = epoch;
            self.best = Some(state.clone());
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        self.stale >= self.patience
    }
}

pub(crate) fn ensure_finite_loss(loss: f64, epoch: usize) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::Numeric(format!("training loss became {loss} in epoch {epoch}")))
    }
}
