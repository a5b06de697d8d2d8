//! Long-gap audio inpainting.
//!
//! - [`dsp`]: STFT, Griffin-Lim, WAV IO.
//! - [`autograd`]: a small reverse-mode differentiation engine with strided,
//!   dilated and gated convolutions, plus Adam and receptive-field analysis.
//! - [`models`]: the waveform and spectrogram inpainting networks and the
//!   end-to-end pipelines.
//! - [`losses`]: masked L1, perceptual distance, SSIM and classifier backbones.
//! - [`harness`]: synthetic corpora, masking, training, evaluation and the
//!   mask-length by receptive-field ablation.

pub mod autograd;
pub mod dsp;
pub mod error;
pub mod harness;
pub mod losses;
pub mod mask;
pub mod models;
pub mod seed;

pub use error::{Error, Result};
