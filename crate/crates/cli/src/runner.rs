//! Runs an experiment across seeds and persists its outputs.
//!
//! Seeds run concurrently on a dedicated pool; each returns its rows and
//! file contents, and a single collector writes them in seed order.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use nica::datagen::{apply_mixing, attach_auxiliary, build_mixing_with, Dataset};
use nica::estimators::{
    darmois_transform_with, linear_ica, pca_baseline, random_features_pipeline, random_rotation_baseline, tcl_pipeline,
    train_gcl, train_mle, train_pcl, write_signals_csv, EstimatorResult, Method, TrainConfig,
};
use nica::eval::{hsic_independence, ks_uniformity, mcc, EvaluationReport};
use nica::rng::{self, derive_seed};
use nica::Tensor;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{EvalTarget, ExperimentConfig};
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Ok,
    Failed,
}

/// One row of `results.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub config_hash: String,
    pub kind: String,
    pub seed_index: usize,
    pub seed: u64,
    pub method: String,
    pub status: Status,
    pub mcc: Option<f64>,
    /// Held-out pretext accuracy or AUC; log-likelihood per point for MLE.
    pub pretext: Option<f64>,
    /// Largest per-column distance to uniform (Darmois only).
    pub ks_max: Option<f64>,
    pub hsic_statistic: Option<f64>,
    pub hsic_threshold: Option<f64>,
    pub hsic_reject: Option<bool>,
    pub ica_converged: Option<bool>,
    pub error: Option<String>,
    pub wall_clock_s: f64,
    /// Semicolon-separated paths relative to the output directory.
    pub artifacts: String,
}

pub const RESULTS_FILE: &str = "results.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const PLOT_FILE: &str = "mcc.dat";

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    /// Seeds processed concurrently.
    pub jobs: usize,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub config_hash: String,
    pub out_dir: PathBuf,
    pub records: Vec<ResultRecord>,
}

impl RunSummary {
    pub fn failures(&self) -> usize {
        self.records.iter().filter(|r| r.status == Status::Failed).count()
    }

    pub fn is_partial(&self) -> bool {
        self.failures() > 0
    }

    /// Rows for one method, in seed order.
    pub fn rows(&self, method: Method) -> impl Iterator<Item = &ResultRecord> {
        self.records.iter().filter(move |r| r.method == method.as_str())
    }

    /// Per-seed MCC for one method; failed seeds are skipped.
    pub fn mcc(&self, method: Method) -> Vec<f64> {
        self.rows(method).filter_map(|r| r.mcc).collect()
    }

    pub fn pretext(&self, method: Method) -> Vec<f64> {
        self.rows(method).filter_map(|r| r.pretext).collect()
    }
}

struct MethodRun {
    z: Tensor,
    estimator: Option<EstimatorResult>,
    report: EvaluationReport,
}

struct SeedOutput {
    records: Vec<ResultRecord>,
    files: Vec<(String, Vec<u8>)>,
}

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    let text = payload
        .downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| payload.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "unknown panic".into());
    format!("panic: {text}")
}

/// Runs `f`, turning both errors and panics into a message.
fn isolate<T>(f: impl FnOnce() -> nica::Result<T>) -> Result<T, String> {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(v)) => Ok(v),
        Ok(Err(e)) => Err(e.to_string()),
        Err(p) => Err(panic_message(p)),
    }
}

/// Sources, mixing and auxiliary variable for one seed.
pub fn build_dataset(cfg: &ExperimentConfig, seed: u64) -> nica::Result<Dataset> {
    let sources = cfg.source.generate(derive_seed(seed, 0))?;
    let net = build_mixing_with(cfg.source.d(), &cfg.mixing, derive_seed(seed, 1))?;
    let mixed = apply_mixing(&net, &sources)?;
    match cfg.aux_mode() {
        Some(mode) => attach_auxiliary(&mixed, mode),
        None => Ok(mixed),
    }
}

fn train_config(cfg: &ExperimentConfig, seed: u64) -> TrainConfig {
    TrainConfig {
        seed: derive_seed(seed, 2),
        ..cfg.train.clone()
    }
}

fn run_method(cfg: &ExperimentConfig, method: Method, ds: &Dataset, seed: u64) -> nica::Result<MethodRun> {
    let tc = train_config(cfg, seed);
    let n = tc.components(ds.obs_dim())?;
    let (z, estimator) = match method {
        Method::Tcl => split(tcl_pipeline(ds, &tc)?),
        Method::RandomFeatures => split(random_features_pipeline(ds, &tc)?),
        Method::Pcl => split(train_pcl(ds, &tc)?),
        Method::Gcl => split(train_gcl(ds, &tc)?),
        Method::Mle => split(train_mle(ds, &tc)?),
        Method::FastIca => (linear_ica(&ds.x, n, tc.seed)?.z, None),
        Method::Pca => (pca_baseline(&ds.x, n)?, None),
        Method::RandomRotation => (random_rotation_baseline(&ds.x, n, tc.seed)?, None),
        Method::Darmois => (darmois_transform_with(&ds.x, cfg.darmois_bandwidth_factor)?, None),
    };
    let truth = ds
        .s_true
        .as_ref()
        .ok_or_else(|| nica::Error::Contract("dataset has no ground-truth sources".into()))?;
    let target = match cfg.eval_target() {
        EvalTarget::Sources => truth.clone(),
        EvalTarget::Magnitude => truth.map(f64::abs),
    };
    let mut report = mcc(&target, &z, cfg.eval_mode())?;
    if method == Method::Darmois {
        report.uniformity = Some(
            (0..z.cols())
                .map(|j| ks_uniformity(&z.col(j)))
                .collect::<nica::Result<_>>()?,
        );
        let points = cfg.hsic_points.min(z.rows());
        let idx = &rng::permutation(z.rows(), &mut rng::stream(derive_seed(seed, 3)))[..points];
        report.independence = Some(hsic_independence(
            &z.select_rows(idx),
            cfg.hsic_permutations,
            derive_seed(seed, 4),
        )?);
    }
    Ok(MethodRun { z, estimator, report })
}

fn split(r: EstimatorResult) -> (Tensor, Option<EstimatorResult>) {
    (r.z.clone(), Some(r))
}

fn pretext(method: Method, est: &EstimatorResult) -> Option<f64> {
    match method {
        Method::Mle => est.best().and_then(|m| m.log_likelihood),
        _ => est.pretext_score(),
    }
}

fn run_seed(cfg: &ExperimentConfig, hash: &str, index: usize) -> SeedOutput {
    let seed = derive_seed(cfg.master_seed, index as u64);
    let methods = cfg.methods();
    let report_name = format!("report_{index}.json");
    let signals_name = format!("signals_{index}.csv");
    let blank = |method: Method| ResultRecord {
        config_hash: hash.to_string(),
        kind: cfg.kind.as_str().to_string(),
        seed_index: index,
        seed,
        method: method.as_str().to_string(),
        status: Status::Failed,
        mcc: None,
        pretext: None,
        ks_max: None,
        hsic_statistic: None,
        hsic_threshold: None,
        hsic_reject: None,
        ica_converged: None,
        error: None,
        wall_clock_s: 0.0,
        artifacts: String::new(),
    };

    let start = Instant::now();
    let ds = match isolate(|| build_dataset(cfg, seed)) {
        Ok(ds) => ds,
        Err(e) => {
            let wall = start.elapsed().as_secs_f64();
            let records = methods
                .iter()
                .map(|&m| ResultRecord {
                    error: Some(format!("data generation: {e}")),
                    wall_clock_s: wall,
                    ..blank(m)
                })
                .collect();
            return SeedOutput {
                records,
                files: Vec::new(),
            };
        }
    };

    let mut files = Vec::new();
    let mut records = Vec::new();
    let mut reports = Vec::new();
    let mut signals: Vec<(Method, Tensor)> = Vec::new();
    for &method in &methods {
        let start = Instant::now();
        let outcome = isolate(|| run_method(cfg, method, &ds, seed));
        let wall = start.elapsed().as_secs_f64();
        let mut rec = ResultRecord {
            wall_clock_s: wall,
            ..blank(method)
        };
        let mut artifacts = vec![report_name.clone()];
        match outcome {
            Ok(run) => {
                rec.status = Status::Ok;
                rec.mcc = Some(run.report.mcc);
                if let Some(u) = &run.report.uniformity {
                    rec.ks_max = Some(u.iter().copied().fold(0.0, f64::max));
                }
                if let Some(h) = &run.report.independence {
                    rec.hsic_statistic = Some(h.statistic);
                    rec.hsic_threshold = Some(h.threshold);
                    rec.hsic_reject = Some(h.reject);
                }
                let mut entry = json!({
                    "method": method,
                    "status": Status::Ok,
                    "evaluation": run.report,
                });
                if let Some(est) = &run.estimator {
                    rec.pretext = pretext(method, est);
                    rec.ica_converged = est.ica_converged;
                    entry["pretext"] = json!(rec.pretext);
                    entry["best_epoch"] = json!(est.best_epoch);
                    entry["epochs_run"] = json!(est.history.len());
                    entry["ica_converged"] = json!(est.ica_converged);
                    let curves = format!("curves_{index}_{method}.csv");
                    let mut buf = Vec::new();
                    match est.write_curves_csv(&mut buf) {
                        Ok(()) => {
                            files.push((curves.clone(), buf));
                            artifacts.push(curves);
                        }
                        Err(e) => rec.error = Some(format!("curves: {e}")),
                    }
                    if cfg.save_weights {
                        let weights = format!("weights_{index}_{method}.json");
                        let mut buf = Vec::new();
                        match est.write_weights(&mut buf) {
                            Ok(()) => {
                                files.push((weights.clone(), buf));
                                artifacts.push(weights);
                            }
                            Err(e) => rec.error = Some(format!("weights: {e}")),
                        }
                    }
                }
                reports.push(entry);
                signals.push((method, run.z));
                artifacts.push(signals_name.clone());
            }
            Err(e) => {
                reports.push(json!({ "method": method, "status": Status::Failed, "error": e }));
                rec.error = Some(e);
            }
        }
        rec.artifacts = artifacts.join(";");
        records.push(rec);
    }

    let report = json!({
        "config_hash": hash,
        "kind": cfg.kind,
        "seed_index": index,
        "seed": seed,
        "eval_mode": cfg.eval_mode(),
        "eval_target": cfg.eval_target(),
        "n_points": ds.len(),
        "methods": reports,
    });
    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    files.push((report_name, text.into_bytes()));

    let names: Vec<String> = signals.iter().map(|(m, _)| m.as_str().to_string()).collect();
    let mut columns: Vec<(&str, &Tensor)> = Vec::new();
    if let Some(s) = &ds.s_true {
        columns.push(("s", s));
    }
    columns.push(("x", &ds.x));
    for (name, (_, z)) in names.iter().zip(&signals) {
        columns.push((name, z));
    }
    let mut buf = Vec::new();
    match write_signals_csv(&columns, &mut buf) {
        Ok(()) => files.push((signals_name, buf)),
        Err(e) => {
            for r in records.iter_mut().filter(|r| r.status == Status::Ok) {
                r.error = Some(format!("signals: {e}"));
            }
        }
    }
    SeedOutput { records, files }
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))
}

/// Mean and sample standard deviation.
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// One block per method, separated by two blank lines (gnuplot `index`).
fn plot_blocks(cfg: &ExperimentConfig, records: &[ResultRecord]) -> String {
    let mut out = String::new();
    for (k, method) in cfg.methods().iter().enumerate() {
        if k > 0 {
            out.push_str("\n\n");
        }
        out.push_str(&format!("# method {method}\n# seed_index mcc\n"));
        for r in records.iter().filter(|r| r.method == method.as_str()) {
            if let Some(m) = r.mcc {
                out.push_str(&format!("{} {m}\n", r.seed_index));
            }
        }
    }
    out
}

fn summary_json(cfg: &ExperimentConfig, hash: &str, records: &[ResultRecord]) -> serde_json::Value {
    let mut methods = BTreeMap::new();
    for method in cfg.methods() {
        let rows: Vec<&ResultRecord> = records.iter().filter(|r| r.method == method.as_str()).collect();
        let scores: Vec<f64> = rows.iter().filter_map(|r| r.mcc).collect();
        let mut entry = json!({
            "completed": scores.len(),
            "failed": rows.len() - scores.len(),
        });
        if !scores.is_empty() {
            let (mean, std) = mean_std(&scores);
            entry["mcc_mean"] = json!(mean);
            entry["mcc_std"] = json!(std);
        }
        methods.insert(method.as_str(), entry);
    }
    let failed = records.iter().filter(|r| r.status == Status::Failed).count();
    json!({
        "config_hash": hash,
        "kind": cfg.kind,
        "n_seeds": cfg.n_seeds,
        "master_seed": cfg.master_seed,
        "rows": records.len(),
        "failed_rows": failed,
        "partial": failed > 0,
        "methods": methods,
    })
}

/// Runs every seed and method, writing all outputs under `opts.out_dir`.
/// Per-seed failures become `failed` rows; only I/O problems and an
/// invalid configuration are returned as errors.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunSummary, CliError> {
    cfg.validate()?;
    let hash = cfg.hash();
    fs::create_dir_all(&opts.out_dir).map_err(|e| CliError::io(&opts.out_dir, e))?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(opts.jobs.max(1)).build()?;
    let outputs: Vec<SeedOutput> = pool.install(|| {
        (0..cfg.n_seeds)
            .into_par_iter()
            .map(|i| run_seed(cfg, &hash, i))
            .collect()
    });

    let mut records = Vec::new();
    for out in outputs {
        for (name, bytes) in &out.files {
            write_file(&opts.out_dir, name, bytes)?;
        }
        records.extend(out.records);
    }
    let path = opts.out_dir.join(RESULTS_FILE);
    let mut w = csv::Writer::from_path(&path)?;
    for r in &records {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;
    write_file(&opts.out_dir, PLOT_FILE, plot_blocks(cfg, &records).as_bytes())?;
    let mut summary = serde_json::to_string_pretty(&summary_json(cfg, &hash, &records))?;
    summary.push('\n');
    write_file(&opts.out_dir, SUMMARY_FILE, summary.as_bytes())?;
    Ok(RunSummary {
        config_hash: hash,
        out_dir: opts.out_dir.clone(),
        records,
    })
}

/// Reads a `results.csv` back.
pub fn read_results(path: &Path) -> Result<Vec<ResultRecord>, CliError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}
