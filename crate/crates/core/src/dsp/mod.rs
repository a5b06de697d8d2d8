//! Signal processing: STFT/ISTFT, magnitude transforms, Griffin-Lim and WAV IO.

mod audio;
pub mod griffin_lim;
pub mod stft;
pub mod wav;

pub use audio::AudioClip;
pub use griffin_lim::{consistency_error, griffin_lim, griffin_lim_traced, GriffinLimOutput, PhaseSeed};
pub use realfft::num_complex::Complex64;
pub use stft::{istft, stft, Spectrogram, SpectrogramKind, Stft, StftParams, WindowKind};
