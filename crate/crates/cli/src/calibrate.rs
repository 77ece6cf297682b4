//! Frozen acceptance thresholds from repeated runs.

use std::collections::BTreeMap;
use std::fs;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::runner::{mean_std, run_experiment, RunOptions, RunSummary, Status};

pub const MIN_CALIBRATION_SEEDS: usize = 5;
pub const FIXTURES_FILE: &str = "fixtures.json";
pub const FIXTURES_VERSION: u32 = 1;
/// Thresholds sit this many standard deviations below the mean.
pub const THRESHOLD_SIGMAS: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricFixture {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation.
    pub std: f64,
    pub threshold: f64,
    pub values: Vec<f64>,
}

impl MetricFixture {
    pub fn from_values(values: Vec<f64>) -> Self {
        let (mean, std) = mean_std(&values);
        MetricFixture {
            n: values.len(),
            mean,
            std,
            threshold: mean - THRESHOLD_SIGMAS * std,
            values,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fixtures {
    pub version: u32,
    pub config_hash: String,
    pub kind: String,
    pub master_seed: u64,
    pub n_seeds: usize,
    /// Keyed `<method>.<metric>`, e.g. `tcl.mcc`.
    pub metrics: BTreeMap<String, MetricFixture>,
}

impl Fixtures {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let f: Fixtures = serde_json::from_str(text)?;
        if f.version != FIXTURES_VERSION {
            return Err(CliError::Invalid(vec![format!(
                "fixtures version: expected {FIXTURES_VERSION}, got {}",
                f.version
            )]));
        }
        Ok(f)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("fixtures serialize");
        s.push('\n');
        s
    }

    pub fn metric(&self, key: &str) -> Option<&MetricFixture> {
        self.metrics.get(key)
    }

    pub fn from_summary(cfg: &ExperimentConfig, summary: &RunSummary) -> Self {
        let mut metrics = BTreeMap::new();
        for method in cfg.methods() {
            let rows: Vec<_> = summary.rows(method).collect();
            let series: [(&str, Vec<f64>); 3] = [
                ("mcc", rows.iter().filter_map(|r| r.mcc).collect()),
                ("pretext", rows.iter().filter_map(|r| r.pretext).collect()),
                ("ks_max", rows.iter().filter_map(|r| r.ks_max).collect()),
            ];
            for (name, values) in series {
                if !values.is_empty() {
                    metrics.insert(format!("{method}.{name}"), MetricFixture::from_values(values));
                }
            }
        }
        Fixtures {
            version: FIXTURES_VERSION,
            config_hash: summary.config_hash.clone(),
            kind: cfg.kind.as_str().to_string(),
            master_seed: cfg.master_seed,
            n_seeds: cfg.n_seeds,
            metrics,
        }
    }
}

/// Runs the experiment and writes `fixtures.json` next to its outputs.
/// Refuses fewer than five seeds and any failed run.
pub fn calibrate(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Fixtures, CliError> {
    if cfg.n_seeds < MIN_CALIBRATION_SEEDS {
        return Err(CliError::Calibration(format!(
            "need at least {MIN_CALIBRATION_SEEDS} seeds, got {}",
            cfg.n_seeds
        )));
    }
    let summary = run_experiment(cfg, opts)?;
    if let Some(bad) = summary.records.iter().find(|r| r.status == Status::Failed) {
        return Err(CliError::Calibration(format!(
            "{} failed on seed {}: {}",
            bad.method,
            bad.seed_index,
            bad.error.as_deref().unwrap_or("unknown error")
        )));
    }
    let fixtures = Fixtures::from_summary(cfg, &summary);
    let path = opts.out_dir.join(FIXTURES_FILE);
    fs::write(&path, fixtures.to_json()).map_err(|e| CliError::io(&path, e))?;
    Ok(fixtures)
}
