//! Maximum likelihood for invertible networks, optimized with the relative
//! gradient.
//!
//! The demixing network alternates square linear layers with a smooth
//! leaky nonlinearity, so
//! `log|det Jg(x)| = Σ_ℓ log|det W_ℓ| + Σ_hidden log σ′(pre-activation)`.

use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::estimators::config::{EpochMetrics, EstimatorResult, Method, SourceDensity, TrainConfig};
use crate::estimators::train::{standardization, standardize};
use crate::numerics::linalg::{log_abs_det, random_orthogonal};
use crate::numerics::{Activation, Layer, Mlp, Tape, Tensor, Unary};
use crate::rng;

const MAX_HALVINGS: usize = 40;
const STEP_GROWTH: f64 = 1.25;
const MAX_STEP: f64 = 1.0;

fn check_architecture(g: &Mlp) -> Result<()> {
    let d = g.input_dim();
    let n = g.layers().len();
    for (i, l) in g.layers().iter().enumerate() {
        if l.weight.shape() != (d, d) {
            return Err(Error::Contract(format!(
                "layer {i} must be {d}x{d} for an invertible network, got {}x{}",
                l.weight.rows(),
                l.weight.cols()
            )));
        }
        let ok = if i + 1 == n {
            l.activation == Activation::Identity
        } else {
            matches!(l.activation, Activation::LeakySoft { .. })
        };
        if !ok {
            return Err(Error::Contract(format!("layer {i} has activation {:?}", l.activation)));
        }
    }
    Ok(())
}

fn log_deriv(act: Activation) -> Option<Unary> {
    match act {
        Activation::LeakySoft { slope } => Some(Unary::LeakySoftLogDeriv { slope }),
        _ => None,
    }
}

/// `log|det Jg(x)|` for every row of `x`, from layer determinants and
/// elementwise log-derivatives.
pub fn log_abs_det_jacobian(g: &Mlp, x: &Tensor) -> Result<Vec<f64>> {
    check_architecture(g)?;
    let dets: f64 = g.layers().iter().map(|l| log_abs_det(&l.weight)).sum::<Result<f64>>()?;
    let mut out = vec![dets; x.rows()];
    let mut h = x.clone();
    for l in g.layers() {
        let pre = h.matmul(&l.weight)?.add_row(&l.bias)?;
        if let Some(f) = log_deriv(l.activation) {
            for (t, o) in out.iter_mut().enumerate() {
                *o += pre.row(t).iter().map(|&v| f.apply(v)).sum::<f64>();
            }
        }
        let act = l.activation.unary();
        h = pre.map(|v| act.apply(v));
    }
    Ok(out)
}

/// Mean log-likelihood per point of `x` under `g` and the component density.
pub fn mle_log_likelihood(g: &Mlp, x: &Tensor, density: SourceDensity) -> Result<f64> {
    let ld = log_abs_det_jacobian(g, x)?;
    let z = g.forward(x)?;
    let lp = density.log_pdf();
    let total: f64 = z.data().iter().map(|&v| lp.apply(v)).sum::<f64>() + ld.iter().sum::<f64>();
    Ok(total / x.rows() as f64)
}

/// Data term (everything except `Σ log|det W_ℓ|`) and its Euclidean
/// gradients, per point.
fn data_term(g: &Mlp, x: &Tensor, density: SourceDensity) -> Result<(f64, Vec<Tensor>)> {
    let mut tape = Tape::new();
    let mut h = tape.constant(x.clone());
    let mut params = Vec::new();
    let mut terms = Vec::new();
    for l in g.layers() {
        let w = tape.param(l.weight.clone());
        let b = tape.param(l.bias.clone());
        params.extend([w, b]);
        let lin = tape.matmul(h, w)?;
        let pre = tape.add_row(lin, b)?;
        if let Some(f) = log_deriv(l.activation) {
            let ld = tape.map(pre, f);
            terms.push(tape.sum(ld));
        }
        h = tape.map(pre, l.activation.unary());
    }
    let lp = tape.map(h, density.log_pdf());
    let mut total = tape.sum(lp);
    for t in terms {
        total = tape.add(total, t)?;
    }
    let obj = tape.scale(total, 1.0 / x.rows() as f64);
    let value = tape.value(obj).get(0, 0);
    let mut grads = tape.backward(obj)?;
    Ok((
        value,
        params.into_iter().map(|p| grads.take(p).expect("adjoint")).collect(),
    ))
}

/// Initial network: orthogonal square layers, zero biases.
pub fn initial_demixing(d: usize, n_layers: usize, slope: f64, seed: u64) -> Result<Mlp> {
    let mut r = rng::stream(seed);
    let layers = (0..n_layers)
        .map(|i| Layer {
            weight: random_orthogonal(d, &mut r),
            bias: Tensor::zeros(1, d),
            activation: if i + 1 == n_layers {
                Activation::Identity
            } else {
                Activation::LeakySoft { slope }
            },
        })
        .collect();
    Mlp::from_layers(layers)
}

/// Relative-gradient ascent direction: `W Wᵀ ∇_W + W` for weights (the
/// second term is the log-determinant contribution), plain gradient for
/// biases.
fn ascent_direction(g: &Mlp, grads: &[Tensor]) -> Result<Vec<Tensor>> {
    let mut out = Vec::with_capacity(grads.len());
    for (l, pair) in g.layers().iter().zip(grads.chunks(2)) {
        let w = &l.weight;
        let wwt_g = w.matmul(&w.matmul_tn(&pair[0])?)?;
        out.push(wwt_g.add(w)?);
        out.push(pair[1].clone());
    }
    Ok(out)
}

fn stepped(g: &Mlp, dir: &[Tensor], eps: f64) -> Result<Mlp> {
    let mut next = g.clone();
    for (p, d) in next.params_mut().into_iter().zip(dir) {
        p.axpy(eps, d)?;
    }
    Ok(next)
}

/// Fits a square invertible network by maximum likelihood.
///
/// Each epoch takes one full-batch relative-gradient step, halving the step
/// until the likelihood does not decrease; the step grows again after each
/// accepted move. Hidden widths must all equal the data dimension; their
/// count sets the number of nonlinear layers.
pub fn train_mle(dataset: &Dataset, cfg: &TrainConfig) -> Result<EstimatorResult> {
    cfg.validate()?;
    dataset.validate()?;
    let d = dataset.obs_dim();
    if let Some(k) = cfg.output_dim.filter(|&k| k != d) {
        return Err(Error::Contract(format!(
            "maximum likelihood needs as many components as observed variables ({d}), got {k}"
        )));
    }
    if let Some(&w) = cfg.hidden.iter().find(|&&w| w != d) {
        return Err(Error::Contract(format!(
            "hidden widths must equal the data dimension {d}, got {w}"
        )));
    }
    let (mean, std) = standardization(&dataset.x)?;
    let xs = standardize(&dataset.x, &mean, &std);
    let log_scale: f64 = std.iter().map(|s| s.ln()).sum();

    let mut g = initial_demixing(d, cfg.hidden.len() + 1, cfg.slope, cfg.seed)?;
    let mut ll = mle_log_likelihood(&g, &xs, cfg.density)?;
    let mut eps = cfg.learning_rate;
    let mut history = Vec::new();
    let mut best_epoch = 0;
    for epoch in 0..cfg.epochs {
        let (_, grads) = data_term(&g, &xs, cfg.density)?;
        let dir = ascent_direction(&g, &grads)?;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let cand = stepped(&g, &dir, eps)?;
            // a singular or overflowing candidate is just a rejected step
            if let Ok(v) = mle_log_likelihood(&cand, &xs, cfg.density) {
                if v >= ll {
                    accepted = Some((cand, v));
                    break;
                }
            }
            eps *= 0.5;
        }
        let Some((next, v)) = accepted else { break };
        g = next;
        ll = v;
        eps = (eps * STEP_GROWTH).min(MAX_STEP);
        best_epoch = epoch;
        let raw_ll = ll - log_scale;
        history.push(EpochMetrics {
            epoch,
            loss: -raw_ll,
            heldout_loss: None,
            accuracy: None,
            auc: None,
            log_likelihood: Some(raw_ll),
        });
    }
    g.absorb_input_standardization(&mean, &std)?;
    let z = g.forward(&dataset.x)?;
    Ok(EstimatorResult {
        method: Method::Mle,
        extractor: g,
        z,
        features: None,
        history,
        best_epoch,
        ica_converged: None,
    })
}
