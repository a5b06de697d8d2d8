//! Masked intervals and their sample- and frame-level views.

use serde::{Deserialize, Serialize};

use crate::dsp::StftParams;
use crate::error::{Error, Result};

/// A masked interval `[start, end)` in samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MaskSpec {
    pub start: usize,
    pub end: usize,
}

impl MaskSpec {
    /// A mask strictly inside a clip of `clip_len` samples:
    /// `0 < start < end < clip_len`.
    pub fn new(start: usize, end: usize, clip_len: usize) -> Result<Self> {
        let mask = Self { start, end };
        mask.check(clip_len)?;
        Ok(mask)
    }

    pub fn check(&self, clip_len: usize) -> Result<()> {
        if self.end <= self.start {
            return Err(Error::Mask(format!("mask end {} must exceed start {}", self.end, self.start)));
        }
        if self.start == 0 || self.end >= clip_len {
            return Err(Error::Mask(format!(
                "mask [{}, {}) must lie strictly inside a clip of {clip_len} samples",
                self.start, self.end
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains(&self, i: usize) -> bool {
        (self.start..self.end).contains(&i)
    }

    /// `true` at masked samples.
    pub fn sample_mask(&self, clip_len: usize) -> Vec<bool> {
        (0..clip_len).map(|i| self.contains(i)).collect()
    }

    /// `true` at every frame whose window reads any masked sample, following
    /// reflection padding at the clip ends.
    pub fn frame_mask(&self, params: &StftParams, clip_len: usize) -> Vec<bool> {
        frame_mask_from_samples(params, &self.sample_mask(clip_len))
    }

    /// Frame indices flagged by [`MaskSpec::frame_mask`] as a `[first, last]`
    /// range, if any.
    pub fn frame_range(&self, params: &StftParams, clip_len: usize) -> Option<(usize, usize)> {
        let m = self.frame_mask(params, clip_len);
        Some((m.iter().position(|b| *b)?, m.iter().rposition(|b| *b)?))
    }
}

/// Lift an arbitrary per-sample mask onto the STFT frame grid.
pub fn frame_mask_from_samples(params: &StftParams, sample_mask: &[bool]) -> Vec<bool> {
    let len = sample_mask.len();
    let frames = params.frame_count(len);
    if len <= params.pad() {
        return vec![sample_mask.iter().any(|b| *b); frames];
    }
    (0..frames)
        .map(|t| {
            let q0 = t * params.hop;
            (q0..q0 + params.window_width).any(|q| sample_mask[params.source_index(q, len)])
        })
        .collect()
}

/// Convert a boolean mask into the 0/1 values used by losses and model
/// inputs.
pub fn to_weights(mask: &[bool]) -> Vec<f64> {
    mask.iter().map(|b| if *b { 1.0 } else { 0.0 }).collect()
}
