//! Temporal causal discovery with instantaneous effects and
//! history-dependent noise.

pub mod autodiff;
pub mod cli;
pub mod data;
pub mod error;
pub mod graph;
pub mod io;
pub mod math;
pub mod mechanism;
pub mod metrics;
pub mod nn;
pub mod noise_flow;
pub mod prior;
pub mod scalar;
pub mod sem;
pub mod synthgen;
pub mod trainer;
pub mod treatment;
pub mod variational;

pub use error::{Result, RhinoError};
pub use graph::{SummaryGraph, TemporalGraph};
pub use scalar::Scalar;

/// Double-precision instantiations.
pub type Tape = autodiff::Tape<f64>;
pub type ParamStore = nn::ParamStore<f64>;
pub type Dataset = data::Dataset<f64>;
pub type TrainedModel = trainer::TrainedModel<f64>;
