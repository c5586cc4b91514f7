//! Autoregressive asymmetric linear Gaussian hidden Markov models.
//!
//! Each hidden state carries its own DAG over the observed variables plus a
//! per-variable autoregressive order. Emissions are products of linear
//! Gaussian conditionals, parameters are fit by EM, and structures by a
//! penalized greedy search inside structural EM.

pub mod dataset;
pub mod em;
pub mod error;
pub mod inference;
pub mod init;
pub mod labeling;
pub mod lags;
pub mod linalg;
pub mod model;
pub mod persist;
pub mod structure;
pub mod synth;

pub use dataset::{Dataset, RawDataset};
pub use em::{fit_em, EmConfig, EmReport};
pub use error::{Error, Result};
pub use inference::{loglikelihood, posteriors, viterbi, PosteriorTables, ViterbiPath};
pub use init::{init_from_segments, init_model};
pub use model::{count_parameters, LinearGaussian, Model, StateStructure};
pub use structure::{fit_sem, MaxLagPolicy, SearchMode, SemConfig, SemReport};
