//! Estimators: contrastive learning (TCL, PCL, GCL), maximum likelihood,
//! linear ICA and PCA baselines, and the Darmois construction.

mod config;
mod contrastive;
mod darmois;
mod ica;
mod mle;
mod tcl;
mod train;

pub use config::{
    write_curves_csv, write_signals_csv, EpochMetrics, EstimatorResult, Method, SourceDensity, TrainConfig,
};
pub use contrastive::{train_gcl, train_gcl_with, train_pcl, AuxEncoding, GclOptions, PSI_HIDDEN};
pub use darmois::{darmois_transform, darmois_transform_with, silverman_bandwidth};
pub use ica::{
    linear_ica, pca_baseline, random_rotation_baseline, LinearIca, LinearMap, FASTICA_MAX_ITER, FASTICA_TOLERANCE,
};
pub use mle::{initial_demixing, log_abs_det_jacobian, mle_log_likelihood, train_mle};
pub use tcl::{compose_linear_ica, random_features_pipeline, tcl_pipeline, train_tcl};
pub use train::{auc, HELDOUT_FRACTION};
