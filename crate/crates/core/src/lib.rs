//! Glance-supervised video anomaly detection.
//!
//! A single annotated frame per anomalous event seeds one Gaussian kernel;
//! during training the kernels are expanded by mining high-scoring snippets
//! around each glance and splatted into dense pseudo-labels that supervise a
//! snippet-level scorer alongside the usual video-level MIL loss.
//!
//! Modules, bottom-up:
//! - [`types`]: feature sequences, glance sets, kernels, score tracks, seeds
//! - [`splatting`]: kernel initialization, update and rendering
//! - [`mining`]: bidirectional dynamic-threshold kernel mining
//! - [`scorer`]: encoder + score head, losses, analytic gradients, checkpoints
//! - [`trainer`]: resampling, pairing, pseudo-label refresh, Adam
//! - [`metrics`]: frame-level AUC / AP and their abnormal-only variants
//! - [`dataio`]: file formats, synthetic data, glance sampling and perturbation
//! - [`bench`]: the synthetic ablation harness

pub mod bench;
pub mod dataio;
pub mod error;
pub mod metrics;
pub mod mining;
pub mod scorer;
pub mod splatting;
pub mod trainer;
pub mod types;

pub use error::{Error, Result};

// Rng stream ids, one per consumer of a seed.
pub(crate) const STREAM_INIT: u64 = 1;
pub(crate) const STREAM_TRAIN: u64 = 2;
pub(crate) const STREAM_GLANCE: u64 = 3;
pub(crate) const STREAM_PERTURB: u64 = 4;
pub(crate) const STREAM_SPLIT: u64 = 5;
pub(crate) const STREAM_SYNTH_DIRS: u64 = 6;
pub(crate) const STREAM_SYNTH_VIDEO: u64 = 7;
