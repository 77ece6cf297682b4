//! Time-contrastive learning: classify each observation by its segment.

use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::estimators::config::{EpochMetrics, EstimatorResult, Method, TrainConfig};
use crate::estimators::ica::linear_ica;
use crate::estimators::train::{
    ensure_finite_loss, minibatches, standardization, standardize, stratified_split, EarlyStopping, Model, ParamNodes,
};
use crate::numerics::{Activation, AdamState, Mlp, Tape, Tensor};
use crate::rng;

fn segment_labels(dataset: &Dataset, batch_size: usize) -> Result<(&[usize], usize)> {
    let seg = dataset
        .segments
        .as_deref()
        .ok_or_else(|| Error::Contract("time-contrastive learning requires segment labels".into()))?;
    let k = dataset.n_segments().unwrap_or(0);
    if k < 2 {
        return Err(Error::Contract(format!(
            "time-contrastive learning needs at least 2 segments, got {k}"
        )));
    }
    let mut counts = vec![0usize; k];
    for &l in seg {
        counts[l] += 1;
    }
    if let Some((j, &c)) = counts.iter().enumerate().find(|(_, &c)| c < batch_size) {
        return Err(Error::Contract(format!(
            "segment {j} has {c} points, fewer than the batch size {batch_size}"
        )));
    }
    Ok((seg, k))
}

/// Feature extractor with an absolute-value output layer, as initialised
/// for training with `cfg.seed`.
fn initial_extractor(d: usize, dz: usize, cfg: &TrainConfig, rng: &mut rng::StreamRng) -> Result<Mlp> {
    Mlp::random(d, &cfg.hidden, dz, cfg.hidden_activation(), Activation::Abs, rng)
}

fn cross_entropy_and_accuracy(logits: &Tensor, labels: &[usize]) -> (f64, f64) {
    let mut loss = 0.0;
    let mut correct = 0usize;
    for (i, &y) in labels.iter().enumerate() {
        let row = logits.row(i);
        let (arg, m) = row.iter().enumerate().fold(
            (0, f64::NEG_INFINITY),
            |(a, m), (j, &v)| if v > m { (j, v) } else { (a, m) },
        );
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        loss += lse - row[y];
        correct += usize::from(arg == y);
    }
    let n = labels.len() as f64;
    (loss / n, correct as f64 / n)
}

/// Trains `h` with a multinomial logistic regression head over segment
/// labels. Returns `z = h(x)`, which matches the sources only up to a
/// linear map and componentwise nonlinearities; see [`tcl_pipeline`].
pub fn train_tcl(dataset: &Dataset, cfg: &TrainConfig) -> Result<EstimatorResult> {
    cfg.validate()?;
    dataset.validate()?;
    let (seg, k) = segment_labels(dataset, cfg.batch_size)?;
    let d = dataset.obs_dim();
    let dz = cfg.components(d)?;
    let (mean, std) = standardization(&dataset.x)?;
    let xs = standardize(&dataset.x, &mean, &std);

    let mut rng = rng::stream(cfg.seed);
    let h = initial_extractor(d, dz, cfg, &mut rng)?;
    let head = Mlp::random(dz, &[], k, Activation::Identity, Activation::Identity, &mut rng)?;
    let mut model = Model { nets: vec![h, head] };
    let (train, held) = stratified_split(seg, &mut rng);
    let x_held = xs.select_rows(&held);
    let y_held: Vec<usize> = held.iter().map(|&i| seg[i]).collect();

    let mut adam = AdamState::new(cfg.learning_rate);
    let mut stop = EarlyStopping::new(cfg.patience);
    let mut history = Vec::new();
    for epoch in 0..cfg.epochs {
        let mut total = 0.0;
        for batch in minibatches(&train, cfg.batch_size, &mut rng) {
            let labels: Vec<usize> = batch.iter().map(|&i| seg[i]).collect();
            let mut tape = Tape::new();
            let mut nodes = ParamNodes::new(2);
            let input = tape.constant(xs.select_rows(&batch));
            let feats = nodes.forward(&model, &mut tape, 0, input)?;
            let logits = nodes.forward(&model, &mut tape, 1, feats)?;
            let loss = tape.softmax_cross_entropy(logits, &labels)?;
            let value = tape.value(loss).get(0, 0);
            ensure_finite_loss(value, epoch)?;
            let grads = nodes.gradients(&model, &tape, loss)?;
            model.step(&mut adam, &grads)?;
            total += value * batch.len() as f64;
        }
        let logits = model.nets[1].forward(&model.nets[0].forward(&x_held)?)?;
        let (heldout_loss, accuracy) = cross_entropy_and_accuracy(&logits, &y_held);
        history.push(EpochMetrics {
            epoch,
            loss: total / train.len() as f64,
            heldout_loss: Some(heldout_loss),
            accuracy: Some(accuracy),
            auc: None,
            log_likelihood: None,
        });
        if stop.update(epoch, heldout_loss, &model) {
            break;
        }
    }

    let best_epoch = stop.best_epoch;
    let mut h = stop.best.expect("at least one epoch").nets.swap_remove(0);
    h.absorb_input_standardization(&mean, &std)?;
    let z = h.forward(&dataset.x)?;
    Ok(EstimatorResult {
        method: Method::Tcl,
        extractor: h,
        z,
        features: None,
        history,
        best_epoch,
        ica_converged: None,
    })
}

/// Appends linear ICA to a trained extractor, keeping the raw features.
pub fn compose_linear_ica(mut result: EstimatorResult, x: &Tensor, seed: u64) -> Result<EstimatorResult> {
    let feats = result.z;
    let ica = linear_ica(&feats, feats.cols(), seed)?;
    let mut layers = result.extractor.layers().to_vec();
    layers.push(ica.map.to_layer());
    result.extractor = Mlp::from_layers(layers)?;
    result.z = result.extractor.forward(x)?;
    result.features = Some(feats);
    result.ica_converged = Some(ica.converged);
    Ok(result)
}

/// TCL followed by linear ICA on the learned features.
pub fn tcl_pipeline(dataset: &Dataset, cfg: &TrainConfig) -> Result<EstimatorResult> {
    let trained = train_tcl(dataset, cfg)?;
    compose_linear_ica(trained, &dataset.x, rng::derive_seed(cfg.seed, 1))
}

/// Control for [`tcl_pipeline`]: the same extractor at its untrained
/// initialisation, followed by linear ICA.
pub fn random_features_pipeline(dataset: &Dataset, cfg: &TrainConfig) -> Result<EstimatorResult> {
    cfg.validate()?;
    dataset.validate()?;
    let d = dataset.obs_dim();
    let dz = cfg.components(d)?;
    let (mean, std) = standardization(&dataset.x)?;
    let mut h = initial_extractor(d, dz, cfg, &mut rng::stream(cfg.seed))?;
    h.absorb_input_standardization(&mean, &std)?;
    let z = h.forward(&dataset.x)?;
    let untrained = EstimatorResult {
        method: Method::RandomFeatures,
        extractor: h,
        z,
        features: None,
        history: Vec::new(),
        best_epoch: 0,
        ica_converged: None,
    };
    compose_linear_ica(untrained, &dataset.x, rng::derive_seed(cfg.seed, 1))
}
