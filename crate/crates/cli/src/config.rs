//! Experiment configuration: one strict JSON document per experiment.

use std::path::PathBuf;

use nica::datagen::{AuxMode, MixingSpec, SigmaSchedule, SourceSpec};
use nica::estimators::{Method, TrainConfig};
use nica::eval::CorrelationMode;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    LinearBss,
    TclPipeline,
    PclPipeline,
    GclPipeline,
    MlePipeline,
    DarmoisDemo,
    ComparisonGrid,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::LinearBss => "linear-bss",
            ExperimentKind::TclPipeline => "tcl-pipeline",
            ExperimentKind::PclPipeline => "pcl-pipeline",
            ExperimentKind::GclPipeline => "gcl-pipeline",
            ExperimentKind::MlePipeline => "mle-pipeline",
            ExperimentKind::DarmoisDemo => "darmois-demo",
            ExperimentKind::ComparisonGrid => "comparison-grid",
        }
    }
}

/// What recovered components are scored against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalTarget {
    Sources,
    /// `|s|`: variance-modulated sources are identifiable only up to sign
    /// flips that may differ across segments.
    Magnitude,
}

fn default_n_seeds() -> usize {
    1
}
fn default_hsic_permutations() -> usize {
    200
}
fn default_hsic_points() -> usize {
    1000
}
fn default_bandwidth_factor() -> f64 {
    1.0
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub kind: ExperimentKind,
    pub source: SourceSpec,
    #[serde(default)]
    pub mixing: MixingSpec,
    /// `train.seed` is replaced by a per-seed training seed at run time.
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub eval_mode: Option<CorrelationMode>,
    #[serde(default)]
    pub eval_target: Option<EvalTarget>,
    /// Methods to run on every dataset; required for `comparison-grid`.
    #[serde(default)]
    pub methods: Option<Vec<Method>>,
    #[serde(default)]
    pub aux_mode: Option<AuxMode>,
    #[serde(default = "default_n_seeds")]
    pub n_seeds: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_hsic_permutations")]
    pub hsic_permutations: usize,
    /// Subsample size for the HSIC test.
    #[serde(default = "default_hsic_points")]
    pub hsic_points: usize,
    /// Multiplier on Silverman's bandwidth in the Darmois construction.
    #[serde(default = "default_bandwidth_factor")]
    pub darmois_bandwidth_factor: f64,
    #[serde(default = "default_true")]
    pub save_weights: bool,
}

impl ExperimentConfig {
    /// Parses without validating.
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Invalid(vec![format!("config: {e}")]))
    }

    /// Parses and validates.
    pub fn load(text: &str) -> Result<Self, CliError> {
        let cfg = Self::from_json(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(CliError::Invalid(v))
        }
    }

    fn has_segments(&self) -> bool {
        match &self.source {
            SourceSpec::Nonstationary(_) => true,
            SourceSpec::Ar(_) => false,
            SourceSpec::NonstatAr(s) => !matches!(s.sigma, SigmaSchedule::Constant { .. }),
        }
    }

    /// Every violated field, one message each.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.version != CONFIG_VERSION {
            v.push(format!("version: expected {CONFIG_VERSION}, got {}", self.version));
        }
        if let Err(e) = self.source.validate() {
            v.push(format!("source: {e}"));
        }
        let d = self.source.d();
        let m = &self.mixing;
        if !(m.condition_bound >= 1.0 && m.condition_bound.is_finite()) {
            v.push(format!(
                "mixing.condition_bound: must be finite and at least 1, got {}",
                m.condition_bound
            ));
        }
        if !(m.slope > 0.0 && m.slope <= 1.0) {
            v.push(format!("mixing.slope: must lie in (0, 1], got {}", m.slope));
        }
        v.extend(self.train.violations().into_iter().map(|s| format!("train.{s}")));
        if let Some(k) = self.train.output_dim {
            if k > d {
                v.push(format!("train.output_dim: {k} exceeds source dimension {d}"));
            }
        }
        if self.n_seeds == 0 {
            v.push("n_seeds: must be at least 1".into());
        }
        if self.hsic_permutations < nica::eval::HSIC_MIN_PERMUTATIONS {
            v.push(format!(
                "hsic_permutations: must be at least {}, got {}",
                nica::eval::HSIC_MIN_PERMUTATIONS,
                self.hsic_permutations
            ));
        }
        if self.hsic_points < nica::eval::HSIC_MIN_POINTS {
            v.push(format!(
                "hsic_points: must be at least {}, got {}",
                nica::eval::HSIC_MIN_POINTS,
                self.hsic_points
            ));
        }
        if !(self.darmois_bandwidth_factor > 0.0 && self.darmois_bandwidth_factor.is_finite()) {
            v.push(format!(
                "darmois_bandwidth_factor: must be positive, got {}",
                self.darmois_bandwidth_factor
            ));
        }
        match &self.methods {
            None if self.kind == ExperimentKind::ComparisonGrid => {
                v.push("methods: required for comparison-grid".into());
            }
            Some(list) if list.is_empty() => v.push("methods: must not be empty".into()),
            Some(list) => {
                for (i, m) in list.iter().enumerate() {
                    if list[..i].contains(m) {
                        v.push(format!("methods: {m} listed twice"));
                    }
                }
            }
            None => {}
        }
        let methods = self.methods();
        if (self.kind == ExperimentKind::DarmoisDemo || methods.contains(&Method::Darmois)) && d != 2 {
            v.push(format!("source: the Darmois construction needs d = 2, got {d}"));
        }
        let needs_segments = methods
            .iter()
            .any(|m| matches!(m, Method::Tcl | Method::RandomFeatures));
        if needs_segments && !self.has_segments() {
            v.push("source: tcl and random-features need segmented sources".into());
        }
        if self.aux_mode == Some(AuxMode::SegmentLabel) && !self.has_segments() {
            v.push("aux_mode: segment-label needs segmented sources".into());
        }
        v
    }

    /// Methods to run, falling back to the kind's defaults.
    pub fn methods(&self) -> Vec<Method> {
        if let Some(m) = &self.methods {
            return m.clone();
        }
        match self.kind {
            ExperimentKind::LinearBss => vec![Method::FastIca, Method::Pca, Method::RandomRotation],
            ExperimentKind::TclPipeline => vec![Method::Tcl, Method::RandomFeatures],
            ExperimentKind::PclPipeline => vec![Method::Pcl, Method::Pca],
            ExperimentKind::GclPipeline if self.has_segments() => vec![Method::Gcl, Method::Tcl],
            ExperimentKind::GclPipeline => vec![Method::Gcl, Method::Pcl],
            ExperimentKind::MlePipeline => vec![Method::Mle, Method::FastIca],
            ExperimentKind::DarmoisDemo => vec![Method::Darmois],
            ExperimentKind::ComparisonGrid => Vec::new(),
        }
    }

    pub fn eval_target(&self) -> EvalTarget {
        self.eval_target.unwrap_or(match self.source {
            SourceSpec::Nonstationary(_) => EvalTarget::Magnitude,
            _ => EvalTarget::Sources,
        })
    }

    /// Rank correlation when scoring against magnitudes, linear otherwise.
    pub fn eval_mode(&self) -> CorrelationMode {
        self.eval_mode.unwrap_or(match self.eval_target() {
            EvalTarget::Magnitude => CorrelationMode::Spearman,
            EvalTarget::Sources => CorrelationMode::Pearson,
        })
    }

    /// Auxiliary variable attached to every dataset: explicit, or implied
    /// by running GCL (segment labels when available, else lagged data).
    pub fn aux_mode(&self) -> Option<AuxMode> {
        self.aux_mode.or_else(|| {
            self.methods().contains(&Method::Gcl).then(|| {
                if self.has_segments() {
                    AuxMode::SegmentLabel
                } else {
                    AuxMode::LaggedObservation
                }
            })
        })
    }

    /// SHA-256 of the canonical JSON form, ignoring the output location.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = None;
        let value = serde_json::to_value(&canonical).expect("config serializes");
        let digest = Sha256::digest(value.to_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "version": 1,
        "kind": "linear-bss",
        "source": {"type": "ar", "d": 3, "t": 2000, "r": [{"type": "linear", "rho": 0.0}],
                   "innovation": {"type": "laplace", "scale": 1.0}},
        "mixing": {"n_layers": 1}
    }"#;

    #[test]
    fn minimal_config_gets_kind_defaults() {
        let cfg = ExperimentConfig::load(MINIMAL).unwrap();
        assert_eq!(
            cfg.methods(),
            vec![Method::FastIca, Method::Pca, Method::RandomRotation]
        );
        assert_eq!(cfg.eval_mode(), CorrelationMode::Pearson);
        assert_eq!(cfg.aux_mode(), None);
        assert_eq!(cfg.n_seeds, 1);
    }

    #[test]
    fn hash_ignores_output_dir_and_key_order() {
        let a = ExperimentConfig::load(MINIMAL).unwrap();
        let mut b = a.clone();
        b.output_dir = Some("/tmp/elsewhere".into());
        assert_eq!(a.hash(), b.hash());
        let reordered = r#"{"mixing": {"n_layers": 1, "slope": 0.2}, "kind": "linear-bss", "version": 1,
            "source": {"innovation": {"scale": 1.0, "type": "laplace"}, "type": "ar", "t": 2000, "d": 3,
                       "r": [{"rho": 0.0, "type": "linear"}]}}"#;
        assert_eq!(a.hash(), ExperimentConfig::load(reordered).unwrap().hash());
        b.n_seeds = 2;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = MINIMAL.replacen("\"version\": 1,", "\"version\": 1, \"n_seed\": 3,", 1);
        assert!(matches!(ExperimentConfig::from_json(&text), Err(CliError::Invalid(_))));
    }

    #[test]
    fn every_violation_is_reported() {
        let mut cfg = ExperimentConfig::load(MINIMAL).unwrap();
        cfg.version = 7;
        cfg.n_seeds = 0;
        cfg.train.epochs = 0;
        cfg.kind = ExperimentKind::DarmoisDemo;
        cfg.methods = Some(vec![Method::Tcl, Method::Tcl]);
        cfg.hsic_points = 10;
        let v = cfg.violations();
        for needle in [
            "version",
            "n_seeds",
            "train.epochs",
            "d = 2",
            "listed twice",
            "segmented",
            "hsic_points",
        ] {
            assert!(v.iter().any(|m| m.contains(needle)), "missing {needle} in {v:?}");
        }
    }

    #[test]
    fn comparison_grid_requires_methods() {
        let mut cfg = ExperimentConfig::load(MINIMAL).unwrap();
        cfg.kind = ExperimentKind::ComparisonGrid;
        assert!(cfg.validate().is_err());
        cfg.methods = Some(vec![Method::Pca]);
        assert!(cfg.validate().is_ok());
    }
}
