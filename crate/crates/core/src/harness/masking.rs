use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::AudioClip;
use crate::error::{Error, Result};
use crate::mask::MaskSpec;
use crate::seed;

/// How the masked interval is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum MaskPolicy {
    Fixed { start_seconds: f64, end_seconds: f64 },
    Random { seconds: f64, seed: u64 },
}

impl MaskPolicy {
    /// Resolve to a sample interval for a clip of `len` samples.
    pub fn resolve(&self, len: usize, sample_rate: u32) -> Result<MaskSpec> {
        let sr = f64::from(sample_rate);
        match *self {
            MaskPolicy::Fixed {
                start_seconds,
                end_seconds,
            } => {
                if !(start_seconds.is_finite() && end_seconds.is_finite()) || start_seconds < 0.0 {
                    return Err(Error::Mask(format!("bad mask times {start_seconds}..{end_seconds}")));
                }
                MaskSpec::new((start_seconds * sr).round() as usize, (end_seconds * sr).round() as usize, len)
            }
            MaskPolicy::Random { seconds, seed: s } => {
                let width = seconds_to_len(seconds, sample_rate)?;
                random_mask(len, width, &mut seed::rng(s))
            }
        }
    }
}

fn seconds_to_len(seconds: f64, sample_rate: u32) -> Result<usize> {
    if !(seconds > 0.0) || !seconds.is_finite() {
        return Err(Error::Mask(format!("mask length {seconds} s must be positive")));
    }
    Ok(((seconds * f64::from(sample_rate)).round() as usize).max(1))
}

/// A uniformly placed interval of `width` samples strictly inside `len`.
pub fn random_mask<R: Rng>(len: usize, width: usize, rng: &mut R) -> Result<MaskSpec> {
    if width == 0 || width + 2 > len {
        return Err(Error::Mask(format!("a {width}-sample mask does not fit strictly inside {len} samples")));
    }
    let start = rng.random_range(1..=len - width - 1);
    MaskSpec::new(start, start + width, len)
}

/// Zero the masked samples.
pub fn apply_mask(clip: &AudioClip, policy: &MaskPolicy) -> Result<(AudioClip, MaskSpec)> {
    let mask = policy.resolve(clip.len(), clip.sample_rate())?;
    Ok((zero_interval(clip, &mask)?, mask))
}

pub fn zero_interval(clip: &AudioClip, mask: &MaskSpec) -> Result<AudioClip> {
    mask.check(clip.len())?;
    let mut samples = clip.samples().to_vec();
    samples[mask.start..mask.end].iter_mut().for_each(|v| *v = 0.0);
    AudioClip::new(samples, clip.sample_rate())
}

/// Concatenate the clip with itself and take `target_len` samples starting
/// at `offset`.
pub fn tile_crop_at(clip: &AudioClip, target_len: usize, offset: usize) -> Result<AudioClip> {
    let n = clip.len();
    if target_len == 0 || target_len > 2 * n || offset + target_len > 2 * n {
        return Err(Error::InvalidParams(format!(
            "crop of {target_len} at {offset} does not fit the {}-sample tiled clip",
            2 * n
        )));
    }
    let s = clip.samples();
    AudioClip::new((offset..offset + target_len).map(|i| s[i % n]).collect(), clip.sample_rate())
}

/// Tile twice, then crop `target_seconds` at a seeded offset.
pub fn augment_tile_crop(clip: &AudioClip, target_seconds: f64, seed_value: u64) -> Result<AudioClip> {
    let target = seconds_to_len(target_seconds, clip.sample_rate()).map_err(|e| Error::InvalidParams(e.to_string()))?;
    if target > 2 * clip.len() {
        return Err(Error::InvalidParams(format!(
            "target {target_seconds} s exceeds the tiled length {} s",
            2.0 * clip.duration_secs()
        )));
    }
    let offset = seed::rng(seed_value).random_range(0..=2 * clip.len() - target);
    tile_crop_at(clip, target, offset)
}
