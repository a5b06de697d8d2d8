//! Short-time Fourier analysis and least-squares overlap-add synthesis.
//!
//! The signal is reflection-padded by `window_width / 2` on both ends before
//! framing. Frame `t` covers padded samples `t * hop .. t * hop + window_width`.
//! Synthesis overlap-adds windowed inverse frames, folds the reflected padding
//! back onto the samples it was copied from, and divides by the folded
//! window-square sum. That is the exact least-squares inverse of the analysis
//! operator, so `istft(stft(x)) == x` up to rounding and Griffin-Lim
//! iterations are true projections.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use realfft::num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use serde::{Deserialize, Serialize};

use super::AudioClip;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    /// Periodic Hann.
    Hann,
}

impl WindowKind {
    pub fn coefficients(self, width: usize) -> Vec<f64> {
        match self {
            WindowKind::Hann => (0..width)
                .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / width as f64).cos())
                .collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftParams {
    pub window_width: usize,
    pub hop: usize,
    pub fft_size: usize,
    pub window: WindowKind,
}

impl StftParams {
    /// Hann window, `fft_size` = next power of two at or above `window_width`.
    pub fn new(window_width: usize, hop: usize) -> Result<Self> {
        Self::with_fft_size(window_width, hop, window_width.next_power_of_two())
    }

    pub fn with_fft_size(window_width: usize, hop: usize, fft_size: usize) -> Result<Self> {
        let params = Self {
            window_width,
            hop,
            fft_size,
            window: WindowKind::Hann,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_width < 2 {
            return Err(Error::InvalidParams("window width must be at least 2".into()));
        }
        if self.hop == 0 || self.hop > self.window_width {
            return Err(Error::InvalidParams(format!(
                "hop {} must lie in 1..={}",
                self.hop, self.window_width
            )));
        }
        if !self.fft_size.is_power_of_two() || self.fft_size < self.window_width {
            return Err(Error::InvalidParams(format!(
                "fft size {} must be a power of two >= window width {}",
                self.fft_size, self.window_width
            )));
        }
        if !self.is_cola() {
            return Err(Error::InvalidParams(format!(
                "window width {} with hop {} does not satisfy constant overlap-add",
                self.window_width, self.hop
            )));
        }
        Ok(())
    }

    /// Constant-overlap-add check on the analysis window.
    pub fn is_cola(&self) -> bool {
        let w = self.window.coefficients(self.window_width);
        let sums: Vec<f64> = (0..self.hop)
            .map(|n| w.iter().skip(n).step_by(self.hop).sum())
            .collect();
        let mean = sums.iter().sum::<f64>() / sums.len() as f64;
        mean > 0.0 && sums.iter().all(|s| (s - mean).abs() <= 1e-10 * mean)
    }

    pub fn freq_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn pad(&self) -> usize {
        self.window_width / 2
    }

    /// Number of frames produced for a signal of `len` samples.
    pub fn frame_count(&self, len: usize) -> usize {
        let padded = len + 2 * self.pad();
        if padded < self.window_width {
            0
        } else {
            (padded - self.window_width) / self.hop + 1
        }
    }

    /// Padded-domain span `[start, end)` of frame `t`, in original sample
    /// coordinates (may extend past either end of the signal).
    pub fn frame_span(&self, t: usize) -> (isize, isize) {
        let start = (t * self.hop) as isize - self.pad() as isize;
        (start, start + self.window_width as isize)
    }

    /// Original sample index that padded-domain index `p` reads from under
    /// reflection padding.
    pub fn source_index(&self, p: usize, len: usize) -> usize {
        let pad = self.pad();
        if p < pad {
            pad - p
        } else if p < pad + len {
            p - pad
        } else {
            2 * (len - 1) - (p - pad)
        }
    }

    /// Frames per second at `sample_rate`.
    pub fn frame_rate(&self, sample_rate: u32) -> f64 {
        f64::from(sample_rate) / self.hop as f64
    }

    /// Constant interior window-square coverage times the FFT length. Dividing
    /// the two-sided spectral energy by this recovers signal energy whenever
    /// the squared window overlap-adds to a constant (Hann with hop <= width/3)
    /// and the padded ends carry no energy.
    pub fn energy_normalizer(&self) -> f64 {
        let w = self.window.coefficients(self.window_width);
        self.fft_size as f64 * w.iter().map(|v| v * v).sum::<f64>() / self.hop as f64
    }
}

impl Default for StftParams {
    fn default() -> Self {
        Self::new(512, 128).expect("default STFT grid is valid")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrogramKind {
    Complex,
    Magnitude,
    LogMagnitude,
}

impl SpectrogramKind {
    pub fn name(self) -> &'static str {
        match self {
            SpectrogramKind::Complex => "complex",
            SpectrogramKind::Magnitude => "magnitude",
            SpectrogramKind::LogMagnitude => "log_magnitude",
        }
    }
}

impl fmt::Display for SpectrogramKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Bins {
    Complex(Vec<Complex64>),
    Real(Vec<f64>),
}

/// Time-frequency matrix stored frequency-major: entry `(k, t)` lives at
/// `k * frames + t`.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrogram {
    params: StftParams,
    kind: SpectrogramKind,
    frames: usize,
    signal_len: usize,
    sample_rate: u32,
    bins: Bins,
}

impl Spectrogram {
    pub fn from_complex(
        params: StftParams,
        signal_len: usize,
        sample_rate: u32,
        bins: Vec<Complex64>,
    ) -> Result<Self> {
        let frames = params.frame_count(signal_len);
        check_len(bins.len(), params.freq_bins() * frames)?;
        if bins.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Numeric("non-finite spectrogram entry".into()));
        }
        Ok(Self {
            params,
            kind: SpectrogramKind::Complex,
            frames,
            signal_len,
            sample_rate,
            bins: Bins::Complex(bins),
        })
    }

    pub fn from_real(
        params: StftParams,
        kind: SpectrogramKind,
        signal_len: usize,
        sample_rate: u32,
        bins: Vec<f64>,
    ) -> Result<Self> {
        if kind == SpectrogramKind::Complex {
            return Err(Error::KindMismatch {
                expected: "magnitude or log_magnitude",
                found: kind.name(),
            });
        }
        let frames = params.frame_count(signal_len);
        check_len(bins.len(), params.freq_bins() * frames)?;
        if let Some(v) = bins.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::Numeric(format!("{kind} entries must be finite and >= 0, found {v}")));
        }
        Ok(Self {
            params,
            kind,
            frames,
            signal_len,
            sample_rate,
            bins: Bins::Real(bins),
        })
    }

    pub fn params(&self) -> &StftParams {
        &self.params
    }

    pub fn kind(&self) -> SpectrogramKind {
        self.kind
    }

    pub fn freq_bins(&self) -> usize {
        self.params.freq_bins()
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn signal_len(&self) -> usize {
        self.signal_len
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn complex_bins(&self) -> Result<&[Complex64]> {
        match &self.bins {
            Bins::Complex(b) => Ok(b),
            Bins::Real(_) => Err(Error::KindMismatch {
                expected: "complex",
                found: self.kind.name(),
            }),
        }
    }

    pub fn real_bins(&self) -> Result<&[f64]> {
        match &self.bins {
            Bins::Real(b) => Ok(b),
            Bins::Complex(_) => Err(Error::KindMismatch {
                expected: "magnitude or log_magnitude",
                found: self.kind.name(),
            }),
        }
    }

    /// `|z|` elementwise.
    pub fn magnitude(&self) -> Result<Spectrogram> {
        let mags = self.complex_bins()?.iter().map(|z| z.norm()).collect();
        self.with_real(SpectrogramKind::Magnitude, mags)
    }

    /// `log(1 + m)` elementwise.
    pub fn log_compress(&self) -> Result<Spectrogram> {
        self.expect_kind(SpectrogramKind::Magnitude)?;
        let out = self.real_bins()?.iter().map(|m| m.ln_1p()).collect();
        self.with_real(SpectrogramKind::LogMagnitude, out)
    }

    /// `exp(l) - 1` elementwise.
    pub fn log_expand(&self) -> Result<Spectrogram> {
        self.expect_kind(SpectrogramKind::LogMagnitude)?;
        let out = self.real_bins()?.iter().map(|l| l.exp_m1()).collect();
        self.with_real(SpectrogramKind::Magnitude, out)
    }

    /// Same grid, new real-valued contents.
    pub fn with_real(&self, kind: SpectrogramKind, bins: Vec<f64>) -> Result<Spectrogram> {
        Spectrogram::from_real(self.params, kind, self.signal_len, self.sample_rate, bins)
    }

    /// Same grid, new complex contents.
    pub fn with_complex(&self, bins: Vec<Complex64>) -> Result<Spectrogram> {
        Spectrogram::from_complex(self.params, self.signal_len, self.sample_rate, bins)
    }

    pub fn expect_kind(&self, kind: SpectrogramKind) -> Result<()> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(Error::KindMismatch {
                expected: kind.name(),
                found: self.kind.name(),
            })
        }
    }

    pub fn same_grid(&self, other: &Spectrogram) -> Result<()> {
        if self.params != other.params || self.frames != other.frames || self.signal_len != other.signal_len {
            return Err(Error::Shape(format!(
                "spectrogram grids differ: {}x{} vs {}x{}",
                self.freq_bins(),
                self.frames,
                other.freq_bins(),
                other.frames
            )));
        }
        Ok(())
    }
}

fn check_len(found: usize, expected: usize) -> Result<()> {
    if found != expected {
        return Err(Error::Shape(format!("expected {expected} bins, found {found}")));
    }
    Ok(())
}

/// Analysis/synthesis pair with cached FFT plans.
pub struct Stft {
    params: StftParams,
    window: Vec<f64>,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
}

impl Stft {
    pub fn new(params: StftParams) -> Result<Self> {
        params.validate()?;
        let mut planner = RealFftPlanner::<f64>::new();
        Ok(Self {
            params,
            window: params.window.coefficients(params.window_width),
            r2c: planner.plan_fft_forward(params.fft_size),
            c2r: planner.plan_fft_inverse(params.fft_size),
        })
    }

    pub fn params(&self) -> &StftParams {
        &self.params
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    fn check_signal_len(&self, len: usize) -> Result<()> {
        if len == 0 {
            return Err(Error::InvalidParams("cannot transform an empty clip".into()));
        }
        if len <= self.params.pad() {
            return Err(Error::InvalidParams(format!(
                "clip of {len} samples is too short for reflection padding of {}",
                self.params.pad()
            )));
        }
        Ok(())
    }

    /// Map padded index `p` to the original sample it copies.
    fn source_index(&self, p: usize, len: usize) -> usize {
        self.params.source_index(p, len)
    }

    pub fn forward(&self, clip: &AudioClip) -> Result<Spectrogram> {
        let bins = self.analyze(clip.samples())?;
        Spectrogram::from_complex(self.params, clip.len(), clip.sample_rate(), bins)
    }

    /// Complex STFT of a raw sample slice, frequency-major.
    pub fn analyze(&self, x: &[f64]) -> Result<Vec<Complex64>> {
        self.check_signal_len(x.len())?;
        let p = &self.params;
        let frames = p.frame_count(x.len());
        let nbins = p.freq_bins();
        let mut out = vec![Complex64::new(0.0, 0.0); nbins * frames];
        let mut input = self.r2c.make_input_vec();
        let mut spectrum = self.r2c.make_output_vec();
        let mut scratch = self.r2c.make_scratch_vec();
        for t in 0..frames {
            input.iter_mut().for_each(|v| *v = 0.0);
            for (i, w) in self.window.iter().enumerate() {
                input[i] = w * x[self.source_index(t * p.hop + i, x.len())];
            }
            self.r2c
                .process_with_scratch(&mut input, &mut spectrum, &mut scratch)
                .map_err(|e| Error::Numeric(e.to_string()))?;
            for (k, z) in spectrum.iter().enumerate() {
                out[k * frames + t] = *z;
            }
        }
        Ok(out)
    }

    pub fn inverse(&self, spec: &Spectrogram) -> Result<AudioClip> {
        if spec.params() != &self.params {
            return Err(Error::InvalidParams("spectrogram was produced with different STFT params".into()));
        }
        let samples = self.synthesize(spec.complex_bins()?, spec.signal_len())?;
        AudioClip::new(samples, spec.sample_rate())
    }

    /// Least-squares inverse of [`Stft::analyze`] for a signal of `len`
    /// samples.
    pub fn synthesize(&self, bins: &[Complex64], len: usize) -> Result<Vec<f64>> {
        self.check_signal_len(len)?;
        let p = &self.params;
        let frames = p.frame_count(len);
        let nbins = p.freq_bins();
        check_len(bins.len(), nbins * frames)?;
        let padded = len + 2 * p.pad();
        let mut ola = vec![0.0; padded];
        let mut wss = vec![0.0; padded];
        let mut spectrum = self.c2r.make_input_vec();
        let mut frame = self.c2r.make_output_vec();
        let mut scratch = self.c2r.make_scratch_vec();
        let scale = 1.0 / p.fft_size as f64;
        for t in 0..frames {
            for (k, z) in spectrum.iter_mut().enumerate() {
                *z = bins[k * frames + t];
            }
            // Real signals have real DC and Nyquist bins; dropping the
            // imaginary part is the projection onto that subspace.
            spectrum[0].im = 0.0;
            spectrum[nbins - 1].im = 0.0;
            self.c2r
                .process_with_scratch(&mut spectrum, &mut frame, &mut scratch)
                .map_err(|e| Error::Numeric(e.to_string()))?;
            let base = t * p.hop;
            for (i, w) in self.window.iter().enumerate() {
                ola[base + i] += w * frame[i] * scale;
                wss[base + i] += w * w;
            }
        }
        let mut num = vec![0.0; len];
        let mut den = vec![0.0; len];
        for q in 0..padded {
            let j = self.source_index(q, len);
            num[j] += ola[q];
            den[j] += wss[q];
        }
        num.iter()
            .zip(&den)
            .enumerate()
            .map(|(j, (n, d))| {
                if *d > 1e-12 {
                    Ok(n / d)
                } else {
                    Err(Error::Numeric(format!("sample {j} has no window coverage")))
                }
            })
            .collect()
    }

    /// Folded window-square coverage of every original sample. The two-sided
    /// spectral energy equals `fft_size * sum_j weights[j] * x[j]^2`.
    pub fn sample_weights(&self, len: usize) -> Result<Vec<f64>> {
        self.check_signal_len(len)?;
        let p = &self.params;
        let frames = p.frame_count(len);
        let padded = len + 2 * p.pad();
        let mut wss = vec![0.0; padded];
        for t in 0..frames {
            for (i, w) in self.window.iter().enumerate() {
                wss[t * p.hop + i] += w * w;
            }
        }
        let mut den = vec![0.0; len];
        for (q, v) in wss.iter().enumerate() {
            den[self.source_index(q, len)] += v;
        }
        Ok(den)
    }
}

/// Weight of bin `k` in the two-sided spectrum: DC and Nyquist appear once,
/// every other bin stands for itself and its conjugate.
pub fn two_sided_weight(k: usize, freq_bins: usize) -> f64 {
    if k == 0 || k + 1 == freq_bins {
        1.0
    } else {
        2.0
    }
}

/// Energy of a half-spectrum matrix counted over the full two-sided spectrum.
pub fn two_sided_energy(spec: &Spectrogram) -> Result<f64> {
    let frames = spec.frames();
    let nbins = spec.freq_bins();
    let bins = spec.complex_bins()?;
    Ok(bins
        .iter()
        .enumerate()
        .map(|(i, z)| two_sided_weight(i / frames, nbins) * z.norm_sqr())
        .sum())
}

pub fn stft(clip: &AudioClip, params: StftParams) -> Result<Spectrogram> {
    Stft::new(params)?.forward(clip)
}

pub fn istft(spec: &Spectrogram) -> Result<AudioClip> {
    Stft::new(*spec.params())?.inverse(spec)
}
