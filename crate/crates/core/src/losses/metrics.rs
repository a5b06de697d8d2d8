use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Masked L1 value with a flag for the empty-mask case (defined as 0).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskedL1 {
    pub value: f64,
    pub empty_mask: bool,
}

/// Mean of `|output - target|` over positions where `mask` is set.
pub fn masked_l1(output: &[f64], target: &[f64], mask: &[bool]) -> Result<MaskedL1> {
    if output.len() != target.len() || output.len() != mask.len() {
        return Err(Error::Shape(format!(
            "masked L1 over {} outputs, {} targets and {} mask entries",
            output.len(),
            target.len(),
            mask.len()
        )));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for ((o, t), m) in output.iter().zip(target).zip(mask) {
        if *m {
            total += (o - t).abs();
            count += 1;
        }
    }
    Ok(MaskedL1 {
        value: if count == 0 { 0.0 } else { total / count as f64 },
        empty_mask: count == 0,
    })
}

/// Local statistics window for SSIM.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SsimWindow {
    /// 11x11 Gaussian weights with sigma 1.5, evaluated at every valid offset.
    #[default]
    Gaussian,
    /// Non-overlapping 8x8 blocks with uniform weights.
    Block,
}

pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
const GAUSS_SIZE: usize = 11;
const GAUSS_SIGMA: f64 = 1.5;
const BLOCK: usize = 8;

pub fn gaussian_kernel() -> Vec<f64> {
    let c = (GAUSS_SIZE / 2) as f64;
    let raw: Vec<f64> = (0..GAUSS_SIZE)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * GAUSS_SIGMA * GAUSS_SIGMA)).exp())
        .collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// Dynamic range of both images together.
pub fn dynamic_range(a: &[f64], b: &[f64]) -> f64 {
    let (lo, hi) = a
        .iter()
        .chain(b)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    hi - lo
}

/// SSIM from local moments.
pub fn ssim_from_moments(mu_a: f64, mu_b: f64, var_a: f64, var_b: f64, cov: f64, range: f64) -> f64 {
    let c1 = (SSIM_K1 * range).powi(2);
    let c2 = (SSIM_K2 * range).powi(2);
    ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2))
}

/// Mean local SSIM of two row-major `rows x cols` images.
pub fn ssim(a: &[f64], b: &[f64], rows: usize, cols: usize, window: SsimWindow) -> Result<f64> {
    if a.len() != rows * cols || b.len() != rows * cols {
        return Err(Error::Shape(format!("SSIM inputs of {} and {} values for {rows}x{cols}", a.len(), b.len())));
    }
    let size = match window {
        SsimWindow::Gaussian => GAUSS_SIZE,
        SsimWindow::Block => BLOCK,
    };
    if rows < size || cols < size {
        return Err(Error::Shape(format!("{rows}x{cols} image is smaller than the {size}x{size} SSIM window")));
    }
    let range = dynamic_range(a, b);
    if range == 0.0 {
        // Both constant and equal everywhere.
        return Ok(1.0);
    }
    match window {
        SsimWindow::Gaussian => Ok(gaussian_ssim(a, b, rows, cols, range)),
        SsimWindow::Block => Ok(block_ssim(a, b, rows, cols, range)),
    }
}

/// Separable valid-mode filtering of `x` by `k` along both axes.
fn filter2(x: &[f64], rows: usize, cols: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (orows, ocols) = (rows - n + 1, cols - n + 1);
    let mut tmp = vec![0.0; rows * ocols];
    for r in 0..rows {
        let row = &x[r * cols..(r + 1) * cols];
        for c in 0..ocols {
            tmp[r * ocols + c] = k.iter().zip(&row[c..c + n]).map(|(w, v)| w * v).sum();
        }
    }
    let mut out = vec![0.0; orows * ocols];
    for r in 0..orows {
        for c in 0..ocols {
            out[r * ocols + c] = (0..n).map(|i| k[i] * tmp[(r + i) * ocols + c]).sum();
        }
    }
    out
}

fn gaussian_ssim(a: &[f64], b: &[f64], rows: usize, cols: usize, range: f64) -> f64 {
    let k = gaussian_kernel();
    let aa: Vec<f64> = a.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = b.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    let [ma, mb, maa, mbb, mab] = [a, b, &aa[..], &bb[..], &ab[..]].map(|x| filter2(x, rows, cols, &k));
    let n = ma.len();
    (0..n)
        .map(|i| {
            ssim_from_moments(
                ma[i],
                mb[i],
                maa[i] - ma[i] * ma[i],
                mbb[i] - mb[i] * mb[i],
                mab[i] - ma[i] * mb[i],
                range,
            )
        })
        .sum::<f64>()
        / n as f64
}

fn block_ssim(a: &[f64], b: &[f64], rows: usize, cols: usize, range: f64) -> f64 {
    let (br, bc) = (rows / BLOCK, cols / BLOCK);
    let area = (BLOCK * BLOCK) as f64;
    let mut total = 0.0;
    for i in 0..br {
        for j in 0..bc {
            let idx = |u: usize, v: usize| (i * BLOCK + u) * cols + j * BLOCK + v;
            let cells = || (0..BLOCK).flat_map(move |u| (0..BLOCK).map(move |v| (u, v)));
            let mu_a = cells().map(|(u, v)| a[idx(u, v)]).sum::<f64>() / area;
            let mu_b = cells().map(|(u, v)| b[idx(u, v)]).sum::<f64>() / area;
            let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
            for (u, v) in cells() {
                let (x, y) = (a[idx(u, v)] - mu_a, b[idx(u, v)] - mu_b);
                va += x * x;
                vb += y * y;
                cov += x * y;
            }
            total += ssim_from_moments(mu_a, mu_b, va / area, vb / area, cov / area, range);
        }
    }
    total / (br * bc) as f64
}

/// Per-clip evaluation metrics. Perceptual distances are absent when no
/// backbone of that domain was supplied.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    /// Waveform masked L1 over masked samples.
    pub masked_l1: f64,
    /// Mean SSIM of the log-magnitude spectrograms.
    pub ssim: f64,
    pub wave_perc_dist: f64,
    pub spec_perc_dist: f64,
    /// Log-magnitude L1 over masked frames.
    pub spec_masked_l1: f64,
}

impl MetricRecord {
    pub fn validate(&self) -> Result<()> {
        let vals = [self.masked_l1, self.ssim, self.wave_perc_dist, self.spec_perc_dist, self.spec_masked_l1];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite metric in {self:?}")));
        }
        if self.ssim > 1.0 + 1e-12 || self.ssim < -1.0 - 1e-12 {
            return Err(Error::Numeric(format!("SSIM {} outside [-1, 1]", self.ssim)));
        }
        Ok(())
    }
}

/// Throughput of a pipeline measured after one excluded warm-up call.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InferenceSpeed {
    pub clips_per_minute: f64,
    pub clips: usize,
    pub seconds: f64,
    pub warmup_seconds: f64,
    pub hardware: String,
}

pub const MIN_SPEED_CLIPS: usize = 5;

/// Time `run` over every item after a warm-up call on the first one.
pub fn inference_speed<T, F>(items: &[T], mut run: F) -> Result<InferenceSpeed>
where
    F: FnMut(&T) -> Result<()>,
{
    if items.len() < MIN_SPEED_CLIPS {
        return Err(Error::InvalidParams(format!(
            "need at least {MIN_SPEED_CLIPS} clips to time, got {}",
            items.len()
        )));
    }
    let w = Instant::now();
    run(&items[0])?;
    let warmup_seconds = w.elapsed().as_secs_f64();
    let t = Instant::now();
    for item in items {
        run(item)?;
    }
    let seconds = t.elapsed().as_secs_f64().max(1e-9);
    Ok(InferenceSpeed {
        clips_per_minute: items.len() as f64 * 60.0 / seconds,
        clips: items.len(),
        seconds,
        warmup_seconds,
        hardware: hardware_descriptor(),
    })
}

/// CPU model (when the OS exposes it), architecture and available threads.
pub fn hardware_descriptor() -> String {
    let model = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|s| {
            s.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split(':').nth(1))
                .map(|m| m.trim().to_string())
        })
        .unwrap_or_else(|| "unknown cpu".into());
    let threads = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    format!("{model} ({}, {threads} threads available)", std::env::consts::ARCH)
}
