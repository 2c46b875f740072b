//! Bayesian and variational inference for Poisson-gamma non-negative matrix
//! factorization, closed-form learning coefficients, and a WAIC-based Monte
//! Carlo estimator of the real log canonical threshold.

pub mod cli;
pub mod coefficients;
pub mod config;
pub mod error;
pub mod estimators;
pub mod gibbs;
pub mod harness;
pub mod io;
mod matrix_serde;
pub mod model;
pub mod rng;
pub mod vb;

pub use config::RunConfig;
pub use coefficients::{CoefficientReport, PriorShapes, Rational};
pub use error::{Error, Result};
pub use estimators::ReplicateEstimates;
pub use gibbs::{GibbsConfig, PosteriorDraws};
pub use harness::{ExperimentConfig, ExperimentResult, TruthSpec};
pub use model::{CountDataset, CountSummary, FactorPair, Hyperparameters, ModelDims};
pub use vb::{VBConfig, VBFit, VariationalPosterior};
