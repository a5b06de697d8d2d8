use rand::Rng;
use realfft::num_complex::Complex64;

use super::stft::{two_sided_weight, Spectrogram, SpectrogramKind, Stft};
use super::AudioClip;
use crate::error::{Error, Result};
use crate::seed;

pub const DEFAULT_ITERATIONS: usize = 60;

/// Initial phase for Griffin-Lim.
#[derive(Clone, Copy, Debug)]
pub enum PhaseSeed<'a> {
    Zero,
    Random(u64),
    /// Phases of frames where `frame_mask` is false are taken from `known`
    /// at the start and re-imposed after every projection.
    KeepKnown {
        known: &'a Spectrogram,
        frame_mask: &'a [bool],
    },
}

#[derive(Clone, Debug)]
pub struct GriffinLimOutput {
    pub clip: AudioClip,
    /// Consistency error of the synthesized signal before the first update
    /// and after each iteration (`iterations + 1` entries).
    pub errors: Vec<f64>,
}

/// Distance between the STFT magnitude of a signal and a target magnitude,
/// measured over the full two-sided spectrum. Under this norm each
/// Griffin-Lim step is a pair of exact projections, so the error never grows.
pub fn consistency_error(spectrum: &[Complex64], target: &[f64], freq_bins: usize, frames: usize) -> f64 {
    spectrum
        .iter()
        .zip(target)
        .enumerate()
        .map(|(i, (z, m))| {
            let d = z.norm() - m;
            two_sided_weight(i / frames, freq_bins) * d * d
        })
        .sum::<f64>()
        .sqrt()
}

pub fn griffin_lim(target: &Spectrogram, iterations: usize, phase_seed: PhaseSeed<'_>) -> Result<AudioClip> {
    Ok(griffin_lim_traced(target, iterations, phase_seed)?.clip)
}

pub fn griffin_lim_traced(
    target: &Spectrogram,
    iterations: usize,
    phase_seed: PhaseSeed<'_>,
) -> Result<GriffinLimOutput> {
    target.expect_kind(SpectrogramKind::Magnitude)?;
    let mags = target.real_bins()?;
    let frames = target.frames();
    let nbins = target.freq_bins();
    let len = target.signal_len();
    let engine = Stft::new(*target.params())?;

    let known = match phase_seed {
        PhaseSeed::KeepKnown { known, frame_mask } => {
            target.same_grid(known)?;
            if frame_mask.len() != frames {
                return Err(Error::Shape(format!(
                    "frame mask has {} entries, spectrogram has {frames} frames",
                    frame_mask.len()
                )));
            }
            let unit: Vec<Complex64> = known
                .complex_bins()?
                .iter()
                .map(|z| Complex64::from_polar(1.0, z.arg()))
                .collect();
            Some((unit, frame_mask))
        }
        _ => None,
    };
    let impose_known = |y: &mut [Complex64]| {
        if let Some((unit, frame_mask)) = &known {
            for k in 0..nbins {
                for t in (0..frames).filter(|t| !frame_mask[*t]) {
                    let i = k * frames + t;
                    y[i] = unit[i] * mags[i];
                }
            }
        }
    };

    let mut y: Vec<Complex64> = match phase_seed {
        PhaseSeed::Zero | PhaseSeed::KeepKnown { .. } => mags.iter().map(|m| Complex64::new(*m, 0.0)).collect(),
        PhaseSeed::Random(s) => {
            let mut rng = seed::rng(s);
            mags.iter()
                .map(|m| Complex64::from_polar(*m, rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)))
                .collect()
        }
    };
    impose_known(&mut y);

    let mut x = engine.synthesize(&y, len)?;
    let mut errors = Vec::with_capacity(iterations + 1);
    for _ in 0..iterations {
        let spectrum = engine.analyze(&x)?;
        errors.push(consistency_error(&spectrum, mags, nbins, frames));
        for ((yi, z), m) in y.iter_mut().zip(&spectrum).zip(mags) {
            *yi = if z.norm() > 0.0 { z * (m / z.norm()) } else { Complex64::new(*m, 0.0) };
        }
        impose_known(&mut y);
        x = engine.synthesize(&y, len)?;
    }
    errors.push(consistency_error(&engine.analyze(&x)?, mags, nbins, frames));
    Ok(GriffinLimOutput {
        clip: AudioClip::new(x, target.sample_rate())?,
        errors,
    })
}
