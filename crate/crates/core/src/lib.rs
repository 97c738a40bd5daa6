//! Minority over-sampling for imbalanced binary classification.
//!
//! The crate provides two model-based over-samplers and the harness needed to
//! compare them against classic baselines:
//!
//! - [`deep_smote`]: a regression network trained to map a concatenated pair
//!   of minority rows to a point on the segment joining them, then frozen and
//!   used as the synthesizer.
//! - [`adversarial`]: DA-SMOTE, which trains the same pair-to-point generator
//!   against a discriminator instead of interpolation targets, and a plain GAN
//!   baseline that differs only in its latent sampler.
//! - [`samplers`]: SMOTE, Borderline-SMOTE-1 and ADASYN.
//! - [`tree`], [`metrics`], [`stats`], [`cv`]: a C4.5-style classifier,
//!   confusion metrics and AUC, paired t-tests, stratified folds.
//! - [`bench`]: the fold-wise benchmark protocol and report writers.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`). The aliases below
//! fix the common double-precision instantiations.

pub mod adversarial;
pub mod bench;
pub mod cv;
pub mod data;
pub mod deep_smote;
pub mod error;
pub mod metrics;
pub mod neighbors;
pub mod nn;
pub mod oracle;
pub mod rng;
pub mod samplers;
pub mod scalar;
pub mod stats;
pub mod tree;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Double-precision dense network.
pub type Mlp = nn::MlpModel<f64>;
/// Single-precision dense network.
pub type Mlp32 = nn::MlpModel<f32>;
/// Double-precision dataset.
pub type Dataset = data::Dataset<f64>;
/// Single-precision dataset.
pub type Dataset32 = data::Dataset<f32>;
/// Double-precision frozen Deep SMOTE synthesizer.
pub type DeepSmote = deep_smote::DeepSmoteModel<f64>;
/// Double-precision decision tree.
pub type Tree = tree::DecisionTree<f64>;
/// Double-precision row-major matrix.
pub type Matrix = ndarray::Array2<f64>;
