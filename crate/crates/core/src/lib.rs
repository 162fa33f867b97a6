//! Active sampling for population mean and variance estimation.
//!
//! A small labelled prior set trains a Bayesian model; the model's
//! predictive variance then picks which further points to label. Three
//! designs are compared: simple random sampling, the local pivotal method
//! and Bayesian maximum variance inclusion.

pub mod dataset;
pub mod experiment;
pub mod models;
pub mod samplers;
pub mod seeds;
pub mod synthetic;

pub use dataset::{DataPoint, DatasetError, IndexSet, Population};
pub use models::{BayesLinearModel, Hyperparams, MlpModel, ModelError, PredictiveDistribution, PredictiveModel};
pub use samplers::{SampleSet, SamplerError, SamplerKind};
