//! Recovery and independence metrics.

mod assignment;
mod hsic;
mod ks;
mod mcc;

pub use assignment::{max_weight_assignment, min_cost_assignment};
pub use hsic::{
    hsic_independence, hsic_pairwise, HsicTest, MIN_PERMUTATIONS as HSIC_MIN_PERMUTATIONS,
    MIN_POINTS as HSIC_MIN_POINTS,
};
pub use ks::ks_uniformity;
pub use mcc::{abs_correlations, mcc, ranks, CorrelationMode, EvaluationReport};
