//! Mixture-model clustering of oscillatory curves with FMM waves.
//!
//! The crate covers single-curve FMM fitting, the MixFMM mixture and its EM
//! estimator, selection of the number of clusters, clustering validity
//! indices, a PCA + k-means baseline, and a small spike-sorting pipeline
//! (detection, segmentation, synthetic data, experiment runner).

// `!(x >= 0.0)` style checks reject NaN along with out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod error;
pub mod fit;
pub mod metrics;
pub mod mixture;
pub mod pipeline;
pub mod select;
pub mod signal;

pub use error::{Error, Result};
pub use fit::{fit_fmm1, fit_fmm_m, FitConfig, FitResult, FmmFitter};
pub use signal::{canonicalize, eval_model, eval_wave, rescale_time, FmmModel, FmmWave, Signal, TimeGrid};
