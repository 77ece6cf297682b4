//! Synthetic generative models for nonlinear ICA experiments.

mod dataset;
pub mod io;
mod mixing;
mod sources;

pub use dataset::{attach_auxiliary, AuxMode, Dataset, DatasetMeta};
pub use mixing::{apply_mixing, build_mixing, build_mixing_with, MixingNetwork, MixingSpec};
pub use sources::{
    generate_ar_sources, generate_nonstat_ar_sources, generate_nonstationary_sources, ArFunction, ArSpec, Innovation,
    LambdaSampler, NonstatArSpec, NonstationarySpec, SigmaSchedule, SourceSpec,
};
