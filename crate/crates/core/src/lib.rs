//! Symmetric cross entropy learning and its noise-robustness toolkit.
//!
//! The crate is organised bottom-up:
//!
//! - [`numerics`]: dense matrices, softmax machinery, the clamped logarithm
//!   that gives `log 0` a finite value, and reproducible RNG streams.
//! - [`losses`]: value-and-gradient kernels for CE, RCE, SL, MAE, GCE and
//!   Forward correction, target transforms (label smoothing, bootstrap) and
//!   weighted composition.
//! - [`noise`]: label-transition matrices and seeded label corruption.
//! - [`data_io`]: IDX (MNIST) parsing and synthetic Gaussian blobs.
//! - [`trainer`]: a small ReLU multilayer perceptron with manual backprop,
//!   momentum SGD and a step learning-rate schedule.
//! - [`metrics`]: class-wise accuracy, prediction distribution and
//!   clean-subset confidence profiles.
//! - [`theory`]: exact noisy-risk expectations, the symmetric-noise risk
//!   identity and brute-force minimizer enumeration.
//! - [`gradcheck`]: central finite-difference checks for every loss.
//!
//! Data-parallel loops go through [`parallel`], which uses rayon when the
//! `parallel` feature is enabled (the default) and plain iteration otherwise.

pub mod data_io;
pub mod error;
pub mod gradcheck;
pub mod losses;
pub mod metrics;
pub mod noise;
pub mod numerics;
pub mod parallel;
pub mod theory;
pub mod trainer;

pub use error::{Error, Result};
