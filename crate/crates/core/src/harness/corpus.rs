//! Deterministic synthetic corpora standing in for real speech and
//! environmental-sound datasets.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use realfft::RealFftPlanner;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dsp::wav::{pcm_to_sample, read_wav, sample_to_pcm, write_wav};
use crate::dsp::AudioClip;
use crate::error::{Error, Result};
use crate::seed;

/// Signal family of one class. Frequencies are nominal; each clip scales
/// them by a random factor within the corpus jitter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ClassGenerator {
    /// Simultaneous sine partials, or one at a time cycling every
    /// `arpeggio_seconds` when set.
    ToneChord {
        freqs_hz: Vec<f64>,
        #[serde(default)]
        arpeggio_seconds: Option<f64>,
    },
    /// Linear frequency sweep; repeats every `sweep_seconds` when set,
    /// otherwise spans the whole clip.
    LinearChirp {
        start_hz: f64,
        end_hz: f64,
        #[serde(default)]
        sweep_seconds: Option<f64>,
    },
    /// Band-passed noise under a periodic burst envelope that never drops
    /// below `1 - depth`.
    AmNoiseBursts {
        rate_hz: f64,
        depth: f64,
        low_hz: f64,
        high_hz: f64,
    },
    /// Band-limited square wave alternating between frequencies every
    /// `switch_seconds`.
    SquareWave {
        freqs_hz: Vec<f64>,
        #[serde(default)]
        switch_seconds: Option<f64>,
    },
    /// Band-passed noise, periodic with period `loop_seconds` when set.
    FilteredNoise {
        low_hz: f64,
        high_hz: f64,
        #[serde(default)]
        loop_seconds: Option<f64>,
    },
    /// Harmonics of `f0_hz` with `1/h` amplitudes and optional vibrato.
    HarmonicStack {
        f0_hz: f64,
        harmonics: usize,
        #[serde(default)]
        vibrato_hz: f64,
        #[serde(default)]
        vibrato_depth: f64,
    },
}

/// Amplitude shape over the clip.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Envelope {
    /// A single event: raised-cosine onset and release at random times near
    /// the clip ends.
    OneShot,
    /// Continuous texture with 10 ms fades at the clip ends.
    Sustained,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub name: String,
    pub class_count: usize,
    pub examples_per_class: usize,
    pub clip_seconds: f64,
    pub sample_rate: u32,
    pub seed: u64,
    /// Relative frequency jitter per clip.
    pub jitter: f64,
    /// Noise floor amplitude before peak normalization.
    pub noise_floor: f64,
    pub envelope: Envelope,
    pub classes: Vec<ClassGenerator>,
}

pub const PRESETS: [&str; 2] = ["toy-sc", "toy-esc"];

impl CorpusSpec {
    /// Ten one-shot classes of 1 s at 16 kHz, mostly tonal.
    pub fn toy_sc(seed_value: u64) -> Self {
        use ClassGenerator::*;
        Self {
            name: "toy-sc".into(),
            class_count: 10,
            examples_per_class: 30,
            clip_seconds: 1.0,
            sample_rate: 16000,
            seed: seed_value,
            jitter: 0.02,
            noise_floor: 0.003,
            envelope: Envelope::OneShot,
            classes: vec![
                ToneChord {
                    freqs_hz: vec![220.0, 330.0],
                    arpeggio_seconds: None,
                },
                ToneChord {
                    freqs_hz: vec![523.0, 659.0, 784.0],
                    arpeggio_seconds: None,
                },
                LinearChirp {
                    start_hz: 200.0,
                    end_hz: 600.0,
                    sweep_seconds: None,
                },
                LinearChirp {
                    start_hz: 1100.0,
                    end_hz: 500.0,
                    sweep_seconds: None,
                },
                HarmonicStack {
                    f0_hz: 140.0,
                    harmonics: 6,
                    vibrato_hz: 0.0,
                    vibrato_depth: 0.0,
                },
                HarmonicStack {
                    f0_hz: 260.0,
                    harmonics: 4,
                    vibrato_hz: 5.0,
                    vibrato_depth: 0.02,
                },
                SquareWave {
                    freqs_hz: vec![180.0],
                    switch_seconds: None,
                },
                SquareWave {
                    freqs_hz: vec![410.0],
                    switch_seconds: None,
                },
                AmNoiseBursts {
                    rate_hz: 6.0,
                    depth: 0.9,
                    low_hz: 1000.0,
                    high_hz: 3000.0,
                },
                FilteredNoise {
                    low_hz: 300.0,
                    high_hz: 1200.0,
                    loop_seconds: None,
                },
            ],
        }
    }

    /// Six sustained texture classes of 5 s at 16 kHz. Tonal classes keep
    /// a steady (or slowly gliding) pitch so a gap is predictable from its
    /// surroundings; the two broadband classes are in the minority and no
    /// class contains long silences.
    pub fn toy_esc(seed_value: u64) -> Self {
        use ClassGenerator::*;
        Self {
            name: "toy-esc".into(),
            class_count: 6,
            examples_per_class: 20,
            clip_seconds: 5.0,
            sample_rate: 16000,
            seed: seed_value,
            jitter: 0.03,
            noise_floor: 0.003,
            envelope: Envelope::Sustained,
            classes: vec![
                HarmonicStack {
                    f0_hz: 200.0,
                    harmonics: 5,
                    vibrato_hz: 0.0,
                    vibrato_depth: 0.0,
                },
                ToneChord {
                    freqs_hz: vec![330.0, 415.0, 494.0, 659.0],
                    arpeggio_seconds: None,
                },
                SquareWave {
                    freqs_hz: vec![300.0],
                    switch_seconds: None,
                },
                LinearChirp {
                    start_hz: 400.0,
                    end_hz: 1200.0,
                    sweep_seconds: None,
                },
                AmNoiseBursts {
                    rate_hz: 4.0,
                    depth: 0.7,
                    low_hz: 500.0,
                    high_hz: 4000.0,
                },
                FilteredNoise {
                    low_hz: 200.0,
                    high_hz: 6000.0,
                    loop_seconds: Some(0.5),
                },
            ],
        }
    }

    pub fn preset(name: &str, seed_value: u64) -> Result<Self> {
        match name {
            "toy-sc" => Ok(Self::toy_sc(seed_value)),
            "toy-esc" => Ok(Self::toy_esc(seed_value)),
            other => Err(Error::InvalidParams(format!(
                "unknown corpus preset {other:?} (expected one of {PRESETS:?})"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.class_count != self.classes.len() || self.class_count == 0 {
            return Err(Error::InvalidParams(format!(
                "class_count {} but {} generators",
                self.class_count,
                self.classes.len()
            )));
        }
        if self.examples_per_class == 0 || !(self.clip_seconds > 0.0) || self.sample_rate == 0 {
            return Err(Error::InvalidParams("corpus needs clips, a duration and a sample rate".into()));
        }
        if !(0.0..0.5).contains(&self.jitter) || !(self.noise_floor >= 0.0) {
            return Err(Error::InvalidParams("jitter must be in [0, 0.5) and noise floor >= 0".into()));
        }
        Ok(())
    }

    pub fn clip_len(&self) -> usize {
        (self.clip_seconds * f64::from(self.sample_rate)).round() as usize
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("corpus spec serializes").as_bytes())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    /// 70/10/20 by index within each class.
    pub fn for_index(index: usize, per_class: usize) -> Self {
        if index * 10 < per_class * 7 {
            Split::Train
        } else if index * 10 < per_class * 8 {
            Split::Val
        } else {
            Split::Test
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorpusClip {
    pub id: String,
    pub class: usize,
    pub split: Split,
    pub seed: u64,
    pub clip: AudioClip,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub spec: CorpusSpec,
    pub clips: Vec<CorpusClip>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub clip_id: String,
    pub class: usize,
    pub split: Split,
    pub path: String,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub spec: CorpusSpec,
    pub spec_hash: String,
    pub entries: Vec<ManifestEntry>,
}

impl Corpus {
    pub fn split(&self, split: Split) -> Vec<&CorpusClip> {
        self.clips.iter().filter(|c| c.split == split).collect()
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            spec: self.spec.clone(),
            spec_hash: self.spec.hash(),
            entries: self
                .clips
                .iter()
                .map(|c| ManifestEntry {
                    clip_id: c.id.clone(),
                    class: c.class,
                    split: c.split,
                    path: format!("clips/{}.wav", c.id),
                    seed: c.seed,
                })
                .collect(),
        }
    }

    /// Write every clip as 16-bit WAV plus `manifest.json` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<Manifest> {
        let clips_dir = dir.join("clips");
        fs::create_dir_all(&clips_dir).map_err(|e| Error::io(&clips_dir, e))?;
        let manifest = self.manifest();
        for (entry, clip) in manifest.entries.iter().zip(&self.clips) {
            write_wav(&dir.join(&entry.path), &clip.clip)?;
        }
        let path = dir.join("manifest.json");
        fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
        Ok(manifest)
    }

    /// Read a corpus written by [`Corpus::write`].
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("manifest.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Manifest = serde_json::from_str(&text)?;
        manifest.spec.validate().map_err(|e| Error::Data(format!("manifest spec: {e}")))?;
        if manifest.spec.hash() != manifest.spec_hash {
            return Err(Error::Data("manifest spec hash does not match its spec".into()));
        }
        let mut clips = Vec::with_capacity(manifest.entries.len());
        for e in &manifest.entries {
            let wav: PathBuf = dir.join(&e.path);
            let clip = read_wav(&wav)?;
            if e.class >= manifest.spec.class_count {
                return Err(Error::Data(format!("clip {} has class {} out of range", e.clip_id, e.class)));
            }
            clips.push(CorpusClip {
                id: e.clip_id.clone(),
                class: e.class,
                split: e.split,
                seed: e.seed,
                clip,
            });
        }
        Ok(Self {
            spec: manifest.spec,
            clips,
        })
    }
}

/// Generate every clip of `spec`. Samples are snapped to the 16-bit PCM
/// grid so that a written and re-read corpus is identical to this one.
pub fn generate_corpus(spec: &CorpusSpec) -> Result<Corpus> {
    spec.validate()?;
    let mut clips = Vec::with_capacity(spec.class_count * spec.examples_per_class);
    for (class, generator) in spec.classes.iter().enumerate() {
        for index in 0..spec.examples_per_class {
            let clip_seed = seed::derive_indexed(spec.seed, &format!("{}/class{class}", spec.name), index as u64);
            let samples = synthesize(spec, generator, clip_seed);
            clips.push(CorpusClip {
                id: format!("{}-{class:02}-{index:03}", spec.name),
                class,
                split: Split::for_index(index, spec.examples_per_class),
                seed: clip_seed,
                clip: AudioClip::new(samples, spec.sample_rate)?,
            });
        }
    }
    Ok(Corpus {
        spec: spec.clone(),
        clips,
    })
}

/// Render one clip.
pub fn synthesize(spec: &CorpusSpec, generator: &ClassGenerator, clip_seed: u64) -> Vec<f64> {
    let mut rng = seed::rng(clip_seed);
    let n = spec.clip_len();
    let sr = f64::from(spec.sample_rate);
    let scale = 1.0 + rng.random_range(-spec.jitter..=spec.jitter);
    let offset = rng.random_range(0.0..1.0);
    let mut x = match generator {
        ClassGenerator::ToneChord {
            freqs_hz,
            arpeggio_seconds,
        } => match arpeggio_seconds {
            None => {
                let mut acc = vec![0.0; n];
                for f in freqs_hz {
                    let phase = rng.random_range(0.0..2.0 * PI);
                    for (i, v) in acc.iter_mut().enumerate() {
                        *v += (2.0 * PI * f * scale * i as f64 / sr + phase).sin();
                    }
                }
                acc
            }
            Some(step) => {
                let period = step * freqs_hz.len() as f64;
                tonal(n, sr, rng.random_range(0.0..2.0 * PI), |t| {
                    let k = (((t + offset * period) / step).floor() as usize) % freqs_hz.len();
                    freqs_hz[k] * scale
                })
            }
        },
        ClassGenerator::LinearChirp {
            start_hz,
            end_hz,
            sweep_seconds,
        } => {
            let span = sweep_seconds.unwrap_or(spec.clip_seconds);
            tonal(n, sr, rng.random_range(0.0..2.0 * PI), |t| {
                let u = if sweep_seconds.is_some() {
                    ((t + offset * span) / span).fract()
                } else {
                    t / span
                };
                (start_hz + (end_hz - start_hz) * u) * scale
            })
        }
        ClassGenerator::AmNoiseBursts {
            rate_hz,
            depth,
            low_hz,
            high_hz,
        } => {
            let noise = band_noise(&mut rng, n, sr, low_hz * scale, high_hz * scale);
            let rate = rate_hz * scale;
            noise
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    let t = i as f64 / sr;
                    let c = 0.5 + 0.5 * (2.0 * PI * (rate * t + offset)).cos();
                    v * ((1.0 - depth) + depth * c.powi(4))
                })
                .collect()
        }
        ClassGenerator::SquareWave {
            freqs_hz,
            switch_seconds,
        } => {
            let fmax = freqs_hz.iter().cloned().fold(0.0, f64::max) * scale;
            let phase0 = rng.random_range(0.0..2.0 * PI);
            let period = switch_seconds.unwrap_or(f64::INFINITY) * freqs_hz.len() as f64;
            let phase = phase_track(n, sr, phase0, |t| match switch_seconds {
                Some(step) => freqs_hz[(((t + offset * period) / step).floor() as usize) % freqs_hz.len()] * scale,
                None => freqs_hz[0] * scale,
            });
            let top = ((0.45 * sr / fmax.max(1.0)).floor() as usize).max(1);
            phase
                .iter()
                .map(|p| (1..=top).step_by(2).map(|k| (k as f64 * p).sin() / k as f64).sum::<f64>())
                .collect()
        }
        ClassGenerator::FilteredNoise {
            low_hz,
            high_hz,
            loop_seconds,
        } => match loop_seconds {
            None => band_noise(&mut rng, n, sr, low_hz * scale, high_hz * scale),
            Some(p) => {
                let period = ((p * sr).round() as usize).clamp(1, n);
                let seg = band_noise(&mut rng, period, sr, low_hz * scale, high_hz * scale);
                let start = (offset * period as f64) as usize;
                (0..n).map(|i| seg[(i + start) % period]).collect()
            }
        },
        ClassGenerator::HarmonicStack {
            f0_hz,
            harmonics,
            vibrato_hz,
            vibrato_depth,
        } => {
            let phase0 = rng.random_range(0.0..2.0 * PI);
            let phase = phase_track(n, sr, phase0, |t| {
                f0_hz * scale * (1.0 + vibrato_depth * (2.0 * PI * (vibrato_hz * t + offset)).sin())
            });
            phase
                .iter()
                .map(|p| (1..=*harmonics).map(|h| (h as f64 * p).sin() / h as f64).sum::<f64>())
                .collect()
        }
    };
    apply_envelope(&mut x, spec.envelope, sr, &mut rng);
    for v in x.iter_mut() {
        *v += spec.noise_floor * rng.random_range(-1.0..1.0);
    }
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    let target = rng.random_range(0.5..=1.0);
    x.iter().map(|v| pcm_to_sample(sample_to_pcm(v * target / peak))).collect()
}

/// Running phase of an oscillator with instantaneous frequency `freq(t)`.
fn phase_track(n: usize, sr: f64, phase0: f64, freq: impl Fn(f64) -> f64) -> Vec<f64> {
    let mut phase = phase0;
    (0..n)
        .map(|i| {
            let p = phase;
            phase += 2.0 * PI * freq(i as f64 / sr) / sr;
            p
        })
        .collect()
}

fn tonal(n: usize, sr: f64, phase0: f64, freq: impl Fn(f64) -> f64) -> Vec<f64> {
    phase_track(n, sr, phase0, freq).into_iter().map(f64::sin).collect()
}

/// White noise restricted to `[low, high]` Hz by zeroing FFT bins; the
/// result is circularly periodic in `n`.
fn band_noise(rng: &mut ChaCha8Rng, n: usize, sr: f64, low: f64, high: f64) -> Vec<f64> {
    let mut x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut planner = RealFftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut spec = fwd.make_output_vec();
    fwd.process(&mut x, &mut spec).expect("buffer sizes come from the plan");
    for (k, z) in spec.iter_mut().enumerate() {
        let f = k as f64 * sr / n as f64;
        if f < low || f > high {
            *z = Default::default();
        }
    }
    // Inverse input must have real DC and Nyquist.
    spec[0].im = 0.0;
    if n % 2 == 0 {
        if let Some(last) = spec.last_mut() {
            last.im = 0.0;
        }
    }
    let mut out = inv.make_output_vec();
    inv.process(&mut spec, &mut out).expect("buffer sizes come from the plan");
    out
}

fn raised_cosine(u: f64) -> f64 {
    0.5 - 0.5 * (PI * u.clamp(0.0, 1.0)).cos()
}

fn apply_envelope(x: &mut [f64], envelope: Envelope, sr: f64, rng: &mut ChaCha8Rng) {
    let n = x.len() as f64;
    let dur = n / sr;
    let (on, attack, off, release) = match envelope {
        Envelope::OneShot => (
            rng.random_range(0.02..0.08) * dur,
            rng.random_range(0.05..0.1) * dur,
            rng.random_range(0.9..0.98) * dur,
            rng.random_range(0.08..0.15) * dur,
        ),
        Envelope::Sustained => (0.0, 0.01, dur, 0.01),
    };
    for (i, v) in x.iter_mut().enumerate() {
        let t = i as f64 / sr;
        *v *= raised_cosine((t - on) / attack) * raised_cosine((off - t) / release);
    }
}
