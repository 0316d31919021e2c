//! Spatial domain detection for count data with a zero-inflated Poisson
//! mixture of finite mixtures, a Markov random field coupling between
//! neighboring spots, and embedded selection of discriminating genes.
//!
//! The crate is organized bottom-up:
//!
//! * [`data`]: count matrices, size factors, quality control, neighbor graphs
//! * [`mfm`]: the partition prior and its Pólya urn conditionals
//! * [`sampler`]: the MCMC over allocations, gene indicators, expression
//!   levels, extra-zero indicators and zero proportions
//! * [`posterior`]: PPI, BFDR calls, MAP, PPM / Dahl and domain merging
//! * [`selection`]: choosing the coupling strength by pBIC
//! * [`simulation`]: Potts-pattern synthetic datasets
//! * [`metrics`]: ARI, sensitivity, specificity, MCC and AUC

pub mod data;
pub mod error;
pub mod math;
pub mod metrics;
pub mod mfm;
pub mod partition;
pub mod posterior;
pub mod sampler;
pub mod selection;
pub mod simulation;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
