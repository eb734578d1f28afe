//! Cognitive FMCW radar waveform selection.
//!
//! A measurement-level FMCW simulator (slow-time coded chirp trains, targets,
//! interferers, noise) feeds a CA-CFAR / DBSCAN / template-classifier
//! pipeline whose per-frame loss drives online bandit policies: uniform
//! random, Gaussian Thompson sampling and satisficing Thompson sampling.
//!
//! Module map:
//! - [`waveform`]: chirp parameters, slow-time codes, the waveform catalog.
//! - [`scene`]: ground-truth targets and interferers.
//! - [`rd`]: beat-signal synthesis and range-Doppler processing.
//! - [`cfar`]: cell-averaging CFAR detection.
//! - [`perception`]: DBSCAN clustering, classification, frame loss.
//! - [`bandit`]: posteriors and waveform-selection policies.
//! - [`harness`]: seeded Monte Carlo experiments and file outputs.

pub mod bandit;
pub mod cfar;
pub mod config;
mod error;
pub mod harness;
pub mod perception;
pub mod rd;
pub mod scene;
pub mod seed;
pub mod waveform;

pub use error::{Error, Result};

/// Propagation speed used throughout the simulator (m/s).
///
/// The rounded value keeps range bins at exactly `c / 2B`-aligned positions
/// for round-number bandwidths.
pub const SPEED_OF_LIGHT: f64 = 3.0e8;

pub type Complex = num_complex::Complex64;

/// Random stream type used for every simulator and policy stream.
pub type SimRng = rand_chacha::ChaCha8Rng;
