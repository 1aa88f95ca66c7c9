//! Hybrid-MVDR beamforming with two-channel spectral PCA denoising for
//! wearable microphone arrays.

// Negated comparisons deliberately reject NaN parameters.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod beamform;
pub mod cli;
pub mod error;
pub mod hybrid;
pub mod metrics;
pub mod noise_fields;
pub mod pipeline;
pub mod scene;
pub mod spatial;
pub mod stft;
pub mod subspace;

pub use error::{Error, Result};
