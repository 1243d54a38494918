//! Dynamic switching, control-state spillover, and dynamic total effects for
//! staggered difference-in-differences designs with network interference.
//!
//! The crate is `no_std` and needs only `alloc`. It covers:
//!
//! - [`panel`]: balanced unit-by-period panels with adoption cohorts, analysis
//!   weights, strata, and a first-stage covariate basis.
//! - [`exposure`]: raw exposure indices from a network and adoption vector,
//!   coarsening into finite exposure states, and two-date states.
//! - [`estimators`]: saturated same-state DSE, transported plug-in CSE
//!   (saturated or structured first stage), DTE, local PDE on isolated
//!   support, never-treated spillover diagnostics, DID and group-time ATT
//!   benchmarks, and event-time aggregation on a common admissible set.
//! - [`inference`]: the stacked estimating-equation system, influence rows,
//!   spatial HAC covariance, pointwise intervals, and simultaneous bands.
//! - [`simulate`]: the three simulation designs, finite-population truths,
//!   exact identity checks, and a Monte Carlo harness.
//!
//! File formats, configuration, and the command-line tool live in the
//! `staggerspill` companion crate.

// `!(x > y)` is used on purpose so that NaN takes the rejecting branch
#![allow(clippy::neg_cmp_op_on_partial_ord)]

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod error;
pub mod estimators;
pub mod exposure;
pub mod inference;
pub mod linalg;
pub mod panel;
pub mod pipeline;
pub mod simulate;
pub mod stats;

pub use error::{Error, Result};
pub use exposure::{ExposureConfig, ExposurePath, ExposureState, NetworkSpec, NetworkWeights};
pub use panel::{Cohort, PanelDataset, PanelParts, Role, ValidationReport};
pub use pipeline::{
    estimate, infer, Estimates, EstimationConfig, InferenceConfig, InferenceReport,
};
