//! Booster for deep clustering models.
//!
//! Given embeddings from an existing clustering model, the crate selects
//! high-confidence samples per batch with an adaptive k-NN label-agreement
//! rule, fine-tunes an online/target encoder pair with a three-term
//! discriminative loss, and re-derives pseudo-labels with k-means once per
//! epoch. A full clustering metric suite is included for evaluation.

pub mod cli;
pub mod config;
pub mod error;
pub mod feature_store;
pub mod knn_filter;
pub mod losses;
pub mod metrics;
pub mod pseudo_labeler;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
pub use feature_store::{DatasetBundle, FeatureMatrix, LabelVector, SynthConfig};
