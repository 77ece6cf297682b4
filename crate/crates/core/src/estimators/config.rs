use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Activation, Mlp, Tensor, Unary};

/// Log-density model for the independent components in maximum likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceDensity {
    Laplace,
    /// Equal mixture of two Gaussians at ±0.9, unit variance overall.
    GaussianMixture2,
    /// Logistic density; smooth with exponential tails.
    #[default]
    Logistic,
}

impl SourceDensity {
    pub fn log_pdf(self) -> Unary {
        match self {
            SourceDensity::Laplace => Unary::LaplaceLogPdf,
            SourceDensity::GaussianMixture2 => Unary::GaussMix2LogPdf,
            SourceDensity::Logistic => Unary::LogisticLogPdf,
        }
    }
}

fn default_hidden() -> Vec<usize> {
    vec![32, 32]
}
fn default_epochs() -> usize {
    400
}
fn default_batch_size() -> usize {
    256
}
fn default_learning_rate() -> f64 {
    1e-3
}
fn default_patience() -> usize {
    50
}
fn default_slope() -> f64 {
    Activation::DEFAULT_SLOPE
}

/// Hyperparameters shared by the trainable estimators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// Hidden layer widths of the feature extractor.
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    /// Number of extracted components `d′`; defaults to the input dimension.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dim: Option<usize>,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default)]
    pub seed: u64,
    /// Epochs without held-out improvement before stopping.
    #[serde(default = "default_patience")]
    pub patience: usize,
    /// Negative-side slope of the hidden nonlinearities.
    #[serde(default = "default_slope")]
    pub slope: f64,
    /// Component density (maximum likelihood only).
    #[serde(default)]
    pub density: SourceDensity,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden: default_hidden(),
            output_dim: None,
            epochs: default_epochs(),
            batch_size: default_batch_size(),
            learning_rate: default_learning_rate(),
            seed: 0,
            patience: default_patience(),
            slope: default_slope(),
            density: SourceDensity::default(),
        }
    }
}

impl TrainConfig {
    /// Field-level problems, one message per violated field.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.hidden.contains(&0) {
            v.push(format!("hidden: widths must be positive, got {:?}", self.hidden));
        }
        if self.output_dim == Some(0) {
            v.push("output_dim: must be positive".into());
        }
        if self.epochs == 0 {
            v.push("epochs: must be positive".into());
        }
        if self.batch_size == 0 {
            v.push("batch_size: must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            v.push(format!(
                "learning_rate: must be positive and finite, got {}",
                self.learning_rate
            ));
        }
        if self.patience == 0 {
            v.push("patience: must be positive".into());
        }
        if !(self.slope > 0.0 && self.slope < 1.0) {
            v.push(format!("slope: must lie in (0, 1), got {}", self.slope));
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v.join("; ")))
        }
    }

    /// Resolves `d′` against the input dimension.
    pub fn components(&self, input_dim: usize) -> Result<usize> {
        let d = self.output_dim.unwrap_or(input_dim);
        if d > input_dim {
            return Err(Error::Contract(format!(
                "output_dim {d} exceeds input dimension {input_dim}"
            )));
        }
        Ok(d)
    }

    pub(crate) fn hidden_activation(&self) -> Activation {
        Activation::LeakyRelu { slope: self.slope }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Tcl,
    Pcl,
    Gcl,
    Mle,
    Darmois,
    #[serde(rename = "fastica")]
    FastIca,
    Pca,
    /// Untrained extractor followed by linear ICA; a control for TCL.
    RandomFeatures,
    /// Whitening followed by a random rotation.
    RandomRotation,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Tcl => "tcl",
            Method::Pcl => "pcl",
            Method::Gcl => "gcl",
            Method::Mle => "mle",
            Method::Darmois => "darmois",
            Method::FastIca => "fastica",
            Method::Pca => "pca",
            Method::RandomFeatures => "random-features",
            Method::RandomRotation => "random-rotation",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One row of a training curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean training objective (loss, or negative log-likelihood per point).
    pub loss: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heldout_loss: Option<f64>,
    /// Held-out pretext classification accuracy.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    /// Held-out discriminator AUC (binary pretext tasks).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auc: Option<f64>,
    /// Exact log-likelihood per point.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_likelihood: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorResult {
    pub method: Method,
    /// Map from observations to `z`.
    pub extractor: Mlp,
    /// `T × d′` recovered components.
    pub z: Tensor,
    /// Raw extractor output before any final linear unmixing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Tensor>,
    pub history: Vec<EpochMetrics>,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
    /// Whether the final linear ICA step converged, when one was applied.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ica_converged: Option<bool>,
}

impl EstimatorResult {
    pub fn best(&self) -> Option<&EpochMetrics> {
        self.history.iter().find(|m| m.epoch == self.best_epoch)
    }

    /// Held-out pretext score at the kept epoch: accuracy for multiclass
    /// tasks, AUC for binary ones.
    pub fn pretext_score(&self) -> Option<f64> {
        self.best().and_then(|m| m.auc.or(m.accuracy))
    }

    pub fn write_weights<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, &self.extractor)?;
        Ok(())
    }

    pub fn write_curves_csv<W: Write>(&self, out: W) -> Result<()> {
        write_curves_csv(&self.history, out)
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_curves_csv<W: Write>(history: &[EpochMetrics], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["epoch", "loss", "heldout_loss", "accuracy", "auc", "log_likelihood"])?;
    for m in history {
        w.write_record([
            m.epoch.to_string(),
            m.loss.to_string(),
            opt(m.heldout_loss),
            opt(m.accuracy),
            opt(m.auc),
            opt(m.log_likelihood),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes named columns side by side with a `t` index column.
pub fn write_signals_csv<W: Write>(columns: &[(&str, &Tensor)], out: W) -> Result<()> {
    let t = columns.first().map_or(0, |(_, m)| m.rows());
    let mut header = vec!["t".to_string()];
    for (name, m) in columns {
        if m.rows() != t {
            return Err(Error::dim(format!("signal block {name}"), t, m.rows()));
        }
        header.extend((1..=m.cols()).map(|j| format!("{name}{j}")));
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(&header)?;
    for r in 0..t {
        let mut rec = vec![r.to_string()];
        for (_, m) in columns {
            rec.extend(m.row(r).iter().map(|v| v.to_string()));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
