//! Subgroup discovery for survival analysis with the Cox proportional hazards
//! model.
//!
//! The crate is organised bottom-up:
//!
//! - [`data`]: survival datasets and axis-aligned regions.
//! - [`cox`]: the log partial likelihood and a Newton-Raphson fitter.
//! - [`metrics`]: expected prediction entropy (EPE), Harrell's C-index,
//!   rejection fraction and region precision/recall.
//! - [`crs`]: conditional rank statistics of a test point against a core
//!   group, including the linear-time log-space recursion.
//! - [`algos`]: the subgroup-discovery methods (base, random, survival tree,
//!   Cox tree, PRIM and the DDGroup family).
//! - [`synth`]: generators for the synthetic benchmarks.
//!
//! ```
//! use cox_subgroup::{cox, metrics, synth};
//!
//! let (data, _truth) = synth::gen_counter(&synth::CounterParams::default(), 500, 7).unwrap();
//! let model = cox::fit_cox(&data, 0.0).unwrap();
//! let epe = metrics::empirical_epe(&model.beta, &data).unwrap();
//! assert!(epe < std::f64::consts::LN_2);
//! ```

// Argument checks use `!(x > 0.0)` so that NaN is rejected with the range.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algos;
pub mod cox;
pub mod crs;
pub mod data;
pub mod metrics;
pub mod numerics;
pub mod synth;

pub use cox::{CoxModel, FitError};
pub use data::{DataError, Region, SurvivalDataset};
