//! Brainprint-modulated target speaker extraction.
//!
//! An EEG-conditioned speech separation stack: a robust spatio-temporal
//! EEG encoder with adaptive spectral gain, a brainprint module whose
//! embedding multiplicatively refines the separated audio, a
//! TasNet-style encoder/decoder around sandglass-shaped separation
//! blocks, the multi-task loss (extraction + subject identification +
//! attention decoding), evaluation metrics (SI-SDR(i), STOI, ESTOI),
//! and a synthetic cocktail-party data harness that makes the whole
//! pipeline trainable and verifiable on a desktop CPU.

pub mod error;
pub mod tensor;
pub mod tape;
pub mod dsp;
pub mod metrics;
pub mod nn;
pub mod eeg;
pub mod encoder;
pub mod separator;
pub mod brainprint;
pub mod losses;
pub mod synth;
pub mod model;
pub mod checkpoint;
pub mod train;

pub use error::{Error, Result};
