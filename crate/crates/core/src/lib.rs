//! Causality-informed neural networks for tabular regression.
//!
//! The pipeline learns a DAG over all variables, lets an expert edit it,
//! compiles the edited graph into a multi-output network and trains that
//! network against observed values plus derivative priors.

pub mod autodiff;
pub mod dataset;
pub mod discovery;
pub mod error;
pub mod graph;
pub mod model;
pub mod pcgrad;
pub mod pipeline;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
