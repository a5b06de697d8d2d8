use serde::{Deserialize, Serialize};

use crate::dsp::griffin_lim::{griffin_lim, PhaseSeed, DEFAULT_ITERATIONS};
use crate::dsp::{AudioClip, Spectrogram, SpectrogramKind, Stft, StftParams};
use crate::error::{Error, Result};
use crate::mask::{frame_mask_from_samples, to_weights, MaskSpec};

use super::config::Domain;
use super::network::Network;

/// Elementwise selector: `output` where `mask` is set, `original` elsewhere.
pub fn paste_back(output: &[f64], original: &[f64], mask: &[bool]) -> Result<Vec<f64>> {
    if output.len() != original.len() || output.len() != mask.len() {
        return Err(Error::Shape(format!(
            "paste-back of {} values onto {} with {} mask entries",
            output.len(),
            original.len(),
            mask.len()
        )));
    }
    Ok(output
        .iter()
        .zip(original)
        .zip(mask)
        .map(|((o, a), m)| if *m { *o } else { *a })
        .collect())
}

pub fn paste_back_clip(output: &AudioClip, original: &AudioClip, sample_mask: &[bool]) -> Result<AudioClip> {
    if output.sample_rate() != original.sample_rate() {
        return Err(Error::Shape("paste-back across different sample rates".into()));
    }
    AudioClip::new(paste_back(output.samples(), original.samples(), sample_mask)?, original.sample_rate())
}

/// Replace whole masked frames of `original` with the corresponding frames
/// of `output`.
pub fn paste_back_spectrogram(output: &Spectrogram, original: &Spectrogram, frame_mask: &[bool]) -> Result<Spectrogram> {
    output.same_grid(original)?;
    if output.kind() != original.kind() {
        return Err(Error::KindMismatch {
            expected: original.kind().name(),
            found: output.kind().name(),
        });
    }
    let frames = original.frames();
    if frame_mask.len() != frames {
        return Err(Error::Shape(format!("{} mask entries for {frames} frames", frame_mask.len())));
    }
    let full: Vec<bool> = (0..original.freq_bins()).flat_map(|_| frame_mask.iter().copied()).collect();
    original.with_real(original.kind(), paste_back(output.real_bins()?, original.real_bins()?, &full)?)
}

/// A clip together with the interval to reconstruct.
#[derive(Clone, Debug, PartialEq)]
pub struct InpaintRequest {
    pub clip: AudioClip,
    pub mask: MaskSpec,
}

impl InpaintRequest {
    pub fn new(clip: AudioClip, mask: MaskSpec) -> Result<Self> {
        mask.check(clip.len())?;
        Ok(Self { clip, mask })
    }

    pub fn sample_mask(&self) -> Vec<bool> {
        self.mask.sample_mask(self.clip.len())
    }

    /// The clip with masked samples set to zero.
    pub fn masked_clip(&self) -> AudioClip {
        let samples = self
            .clip
            .samples()
            .iter()
            .enumerate()
            .map(|(i, s)| if self.mask.contains(i) { 0.0 } else { *s })
            .collect();
        AudioClip::new(samples, self.clip.sample_rate()).expect("masking keeps a valid clip")
    }
}

/// Settings for the spectrogram route.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrogramOptions {
    pub stft: StftParams,
    pub griffin_lim_iterations: usize,
}

impl Default for SpectrogramOptions {
    fn default() -> Self {
        Self {
            stft: StftParams::default(),
            griffin_lim_iterations: DEFAULT_ITERATIONS,
        }
    }
}

/// Intermediate products of the spectrogram route.
#[derive(Clone, Debug)]
pub struct SpectrogramInpainting {
    pub clip: AudioClip,
    /// Log-magnitude after paste-back.
    pub log_magnitude: Spectrogram,
    /// Log-magnitude of the unmasked input, for reference.
    pub original_log_magnitude: Spectrogram,
    pub frame_mask: Vec<bool>,
}

/// Waveform route: model on the masked clip, then paste-back.
pub fn inpaint_waveform(net: &Network, request: &InpaintRequest) -> Result<AudioClip> {
    let mask = request.sample_mask();
    let masked = request.masked_clip();
    let out = net.forward_waveform(&masked, &to_weights(&mask))?;
    paste_back_clip(&out, &request.clip, &mask)
}

/// Spectrogram route for an arbitrary per-sample mask (possibly empty).
pub fn inpaint_spectrogram_mask(
    net: &Network,
    clip: &AudioClip,
    sample_mask: &[bool],
    options: &SpectrogramOptions,
) -> Result<SpectrogramInpainting> {
    if sample_mask.len() != clip.len() {
        return Err(Error::Shape(format!("{} mask entries for {} samples", sample_mask.len(), clip.len())));
    }
    let engine = Stft::new(options.stft)?;
    let complex = engine.forward(clip)?;
    let log_mag = complex.magnitude()?.log_compress()?;
    let frame_mask = frame_mask_from_samples(&options.stft, sample_mask);
    let weights = to_weights(&frame_mask);
    let predicted = net.forward_spectrogram(&log_mag, &weights)?;
    let pasted = paste_back_spectrogram(&predicted, &log_mag, &frame_mask)?;
    let audio = if frame_mask.iter().any(|b| *b) {
        let magnitude = pasted.log_expand()?;
        let seed = PhaseSeed::KeepKnown {
            known: &complex,
            frame_mask: &frame_mask,
        };
        let synth = griffin_lim(&magnitude, options.griffin_lim_iterations, seed)?;
        paste_back_clip(&synth, clip, sample_mask)?
    } else {
        clip.clone()
    };
    Ok(SpectrogramInpainting {
        clip: audio,
        log_magnitude: pasted,
        original_log_magnitude: log_mag,
        frame_mask,
    })
}

/// Spectrogram route: STFT, log compression, frame masking, model,
/// spectrogram paste-back, Griffin-Lim and waveform paste-back.
pub fn inpaint_spectrogram(net: &Network, request: &InpaintRequest, options: &SpectrogramOptions) -> Result<AudioClip> {
    Ok(inpaint_spectrogram_mask(net, &request.clip, &request.sample_mask(), options)?.clip)
}

/// Dispatch on the network's domain.
pub fn inpaint(net: &Network, request: &InpaintRequest, options: &SpectrogramOptions) -> Result<AudioClip> {
    match net.domain() {
        Domain::Waveform => inpaint_waveform(net, request),
        Domain::Spectrogram => inpaint_spectrogram(net, request, options),
    }
}

/// Mask every sample of `mask` in the frames' log-magnitude representation
/// used as model input.
pub fn masked_log_magnitude(log_mag: &Spectrogram, frame_mask: &[bool]) -> Result<Spectrogram> {
    log_mag.expect_kind(SpectrogramKind::LogMagnitude)?;
    let frames = log_mag.frames();
    let bins = log_mag
        .real_bins()?
        .iter()
        .enumerate()
        .map(|(i, v)| if frame_mask[i % frames] { 0.0 } else { *v })
        .collect();
    log_mag.with_real(SpectrogramKind::LogMagnitude, bins)
}
