//! Unsupervised phenotype discovery for mixed-type tabular data.
//!
//! The workflow factors a patient-by-feature matrix with a rank-k
//! generalized low-rank model whose L1 column penalty performs feature
//! selection, clusters rows with PAM on weighted Gower dissimilarities,
//! tunes the regularization by K-fold cross-validation scored with the
//! silhouette, checks each selected feature's necessity by shuffling it and
//! re-clustering, and profiles the resulting clusters with nonparametric
//! tests.

pub mod artifacts;
pub mod cli;
pub mod clustering;
pub mod dataset;
pub mod dissimilarity;
pub mod error;
pub mod glrm;
pub mod pipeline;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
