//! Batch front end for the zipmfm spatial clustering model: simulation,
//! fitting, choice of the spatial coupling, label merging and evaluation.

pub mod commands;
pub mod config;
pub mod output;
