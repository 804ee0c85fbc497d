//! Mask-based multichannel speech enhancement for first-order Ambisonics (FOA)
//! recordings.
//!
//! The processing chain is:
//!
//! 1. [`stft`] analysis of the 4-channel W/X/Y/Z mixture,
//! 2. [`beamform`] pseudo-inverse beamformers toward the known source directions,
//!    producing magnitude features for the mask estimator,
//! 3. a ratio mask, either the oracle from [`masks`] or the one predicted by the
//!    frequency-dilated U-net in [`unet`],
//! 4. [`mwf`] masked covariance estimation and the rank-1 GEVD multichannel
//!    Wiener filter,
//! 5. [`stft`] synthesis and [`metrics`] for SI-SDR evaluation.
//!
//! [`scene`] synthesizes desk-scale training and test mixtures.
//!
//! Data-parallel loops (per frequency bin, per output channel, per scene) run on
//! rayon when the `parallel` feature is enabled (the default) and sequentially
//! otherwise. Results are bit-identical either way.

pub mod beamform;
pub mod error;
pub mod foa;
pub mod linalg;
pub mod masks;
pub mod metrics;
pub mod mwf;
pub mod par;
pub mod pipeline;
pub mod scene;
pub mod stft;
pub mod unet;

pub use error::{Error, Result};
pub use foa::Direction;
pub use masks::Mask;
pub use stft::{Spectrogram, StftConfig};
