//! Inpainting networks, their configuration, paste-back and the two
//! end-to-end pipelines.

mod config;
mod network;
mod pipeline;

pub use config::{Domain, ModelConfig, DEFAULT_EVAL_MASK_SAMPLES};
pub use network::{spectrogram_input, waveform_input, Network};
pub use pipeline::{
    inpaint, inpaint_spectrogram, inpaint_spectrogram_mask, inpaint_waveform, masked_log_magnitude, paste_back,
    paste_back_clip, paste_back_spectrogram, InpaintRequest, SpectrogramInpainting, SpectrogramOptions,
};
