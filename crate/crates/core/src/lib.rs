//! Network spillover and causal-effect estimators for bank panels.
//!
//! - [`panel`]: entity × quarter data, ingestion, treatment construction.
//! - [`weights`]: network and geographic spatial weight matrices.
//! - [`dsdm`]: dynamic spatial Durbin model (MLE, QMLE, Bayesian MCMC).
//! - [`effects`]: direct / indirect / total marginal effects.
//! - [`sdid`]: synthetic difference-in-differences, bootstrap, event study, placebos.
//! - [`netrisk`]: clustering and path statistics on thresholded weight graphs.
//! - [`simulate`]: synthetic panels with known ground truth.

pub mod dsdm;
pub mod effects;
pub mod error;
pub mod netrisk;
pub mod numeric;
pub mod panel;
pub mod rng;
pub mod sdid;
pub mod simulate;
pub mod weights;

pub use error::{Error, Result};
