//! Panel-based causal discovery and survival analysis for longitudinal
//! trial-like data.
//!
//! The pipeline: bin raw visit records into a patient-period panel
//! ([`panel`]), discover a lag-directed causal graph under tiered domain
//! knowledge with Spearman partial-correlation tests ([`citest`],
//! [`discovery`]), compare graphs across data partitions ([`graphmetrics`]),
//! quantify regional heterogeneity against a bootstrap baseline
//! ([`heterogeneity`]), and model outcomes with Weibull AFT and Cox
//! regressions ([`survival`]). The [`synth`] module generates panels from
//! known structural causal models so every stage can be validated against
//! ground truth.

pub mod citest;
pub mod discovery;
pub mod graphmetrics;
pub mod heterogeneity;
pub mod panel;
pub mod survival;
pub mod synth;
mod util;

pub use util::derive_seed;
