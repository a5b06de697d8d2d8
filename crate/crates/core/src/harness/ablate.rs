use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dsp::{AudioClip, Spectrogram, SpectrogramKind, Stft};
use crate::error::{Error, Result};
use crate::losses::{masked_l1, perceptual_distance, PerceptualBackbone};
use crate::mask::{to_weights, MaskSpec};
use crate::autograd::Tensor;
use crate::models::{paste_back_spectrogram, ModelConfig, Network, SpectrogramOptions};
use crate::seed;

use super::parallel::par_map;
use super::corpus::{generate_corpus, CorpusSpec, Split};
use super::training::{train, TrainConfig, TrainMask};

/// Thresholds of the collapse detector.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// A run at least this fraction of the mask length counts as a collapse.
    pub min_run_fraction: f64,
    /// Frames quieter than this fraction of the context median are silent.
    pub rms_ratio: f64,
    /// Context taken on each side of the mask, in seconds.
    pub context_seconds: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            min_run_fraction: 0.25,
            rms_ratio: 0.1,
            context_seconds: 0.5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub success: bool,
    /// Longest run of silent masked frames.
    pub longest_silent_run: usize,
    /// Whether some collapse run contains the centre frame of the mask.
    pub mid_mask_silence: bool,
    pub context_median_rms: f64,
}

/// Root-mean-square over frequency of every frame of a magnitude spectrogram.
pub fn frame_rms(magnitude: &Spectrogram) -> Result<Vec<f64>> {
    magnitude.expect_kind(SpectrogramKind::Magnitude)?;
    let (bins, frames) = (magnitude.freq_bins(), magnitude.frames());
    let data = magnitude.real_bins()?;
    Ok((0..frames)
        .map(|t| ((0..bins).map(|k| data[k * frames + t].powi(2)).sum::<f64>() / bins as f64).sqrt())
        .collect())
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Look for a silent collapse inside the masked frames of `magnitude`.
pub fn detect(magnitude: &Spectrogram, frame_mask: &[bool], config: &DetectorConfig) -> Result<Detection> {
    let rms = frame_rms(magnitude)?;
    if frame_mask.len() != rms.len() {
        return Err(Error::Shape(format!("{} mask frames for {} frames", frame_mask.len(), rms.len())));
    }
    let Some(first) = frame_mask.iter().position(|m| *m) else {
        return Err(Error::Mask("detector needs a non-empty mask".into()));
    };
    let last = frame_mask.iter().rposition(|m| *m).unwrap_or(first);
    let masked = last + 1 - first;
    let ctx = (config.context_seconds * magnitude.params().frame_rate(magnitude.sample_rate())).round() as usize;
    let mut context: Vec<f64> = (first.saturating_sub(ctx)..first)
        .chain(last + 1..(last + 1 + ctx).min(rms.len()))
        .filter(|t| !frame_mask[*t])
        .map(|t| rms[t])
        .collect();
    if context.is_empty() {
        return Err(Error::Mask("mask leaves no context frames".into()));
    }
    let reference = median(&mut context);
    let threshold = config.rms_ratio * reference;
    let min_run = config.min_run_fraction * masked as f64;
    let centre = first + masked / 2;
    let (mut longest, mut mid) = (0, false);
    let mut t = first;
    while t <= last {
        if frame_mask[t] && rms[t] < threshold {
            let start = t;
            while t <= last && frame_mask[t] && rms[t] < threshold {
                t += 1;
            }
            let run = t - start;
            longest = longest.max(run);
            if run as f64 >= min_run && (start..t).contains(&centre) {
                mid = true;
            }
        } else {
            t += 1;
        }
    }
    Ok(Detection {
        success: (longest as f64) < min_run,
        longest_silent_run: longest,
        mid_mask_silence: mid,
        context_median_rms: reference,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationConfig {
    pub corpus: CorpusSpec,
    /// Channel width shared by every architecture.
    pub width: usize,
    /// One architecture per entry: the dilations of its dilated layers.
    pub dilations: Vec<Vec<usize>>,
    pub mask_seconds: Vec<f64>,
    /// Centre of the evaluation mask.
    pub mask_centre_seconds: f64,
    /// Training recipe; the mask is replaced per cell.
    pub train: TrainConfig,
    pub detector: DetectorConfig,
    /// Fraction of evaluation clips that must pass for the cell to succeed.
    pub quorum: f64,
    /// Limit on evaluation clips (all test clips when `None`).
    pub eval_clips: Option<usize>,
    pub spectrogram: SpectrogramOptions,
    pub seed: u64,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            corpus: CorpusSpec::toy_esc(7),
            width: 16,
            dilations: vec![vec![], vec![1, 2, 4], vec![1, 2, 3, 4, 8], vec![1, 2, 4, 8, 18], vec![1, 2, 4, 8, 16, 30]],
            mask_seconds: vec![0.1, 0.25, 0.45],
            mask_centre_seconds: 2.5,
            train: TrainConfig {
                steps: 400,
                batch: 1,
                lr: 2e-3,
                ..Default::default()
            },
            detector: DetectorConfig::default(),
            quorum: 0.5,
            eval_clips: None,
            spectrogram: SpectrogramOptions::default(),
            seed: 0,
        }
    }
}

impl AblationConfig {
    pub fn architecture(&self, index: usize) -> ModelConfig {
        ModelConfig::spectrogram_with_dilations(self.width, &self.dilations[index])
    }

    /// Evaluation mask of `seconds` centred on `mask_centre_seconds`.
    pub fn eval_mask(&self, seconds: f64) -> Result<MaskSpec> {
        let sr = self.corpus.sample_rate as f64;
        let width = (seconds * sr).round() as usize;
        let centre = (self.mask_centre_seconds * sr).round() as usize;
        MaskSpec::new(centre.saturating_sub(width / 2), centre - width / 2 + width, self.corpus.clip_len())
    }

    pub fn mask_frames(&self, seconds: f64) -> Result<usize> {
        let mask = self.eval_mask(seconds)?;
        Ok(mask.frame_mask(&self.spectrogram.stft, self.corpus.clip_len()).iter().filter(|m| **m).count())
    }

    pub fn validate(&self) -> Result<()> {
        if self.dilations.is_empty() || self.mask_seconds.is_empty() {
            return Err(Error::InvalidParams("ablation grid is empty".into()));
        }
        if !(0.0..=1.0).contains(&self.quorum) {
            return Err(Error::InvalidParams(format!("quorum {} outside [0, 1]", self.quorum)));
        }
        for s in &self.mask_seconds {
            self.eval_mask(*s)?;
        }
        self.train.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub mask_seconds: f64,
    pub mask_frames: usize,
    pub receptive_field: usize,
    pub l1: f64,
    pub spec_perc: f64,
    pub success: bool,
    /// Fraction of evaluation clips that passed the detector.
    pub pass_rate: f64,
    /// Fraction of evaluation clips collapsing around the mask centre.
    pub mid_silence_rate: f64,
}

/// Train and score one cell on the pasted log-magnitude output (the
/// detector and both metrics live in the spectrogram domain, so no phase
/// reconstruction is needed).
pub fn run_cell(
    config: &AblationConfig,
    arch: usize,
    mask_seconds: f64,
    train_clips: &[AudioClip],
    eval_clips: &[AudioClip],
    backbone: &PerceptualBackbone,
) -> Result<AblationRow> {
    let model = config.architecture(arch);
    let rf = model.receptive_field()?;
    let cell_seed = seed::derive_indexed(config.seed, &format!("ablation/{mask_seconds}"), arch as u64);
    let mut net = Network::init(model, cell_seed)?;
    let tc = TrainConfig {
        mask: TrainMask::Random { seconds: mask_seconds },
        seed: cell_seed,
        val_every: 0,
        ..config.train.clone()
    };
    train(&mut net, train_clips, &[], &tc, None)?;

    let mask = config.eval_mask(mask_seconds)?;
    let engine = Stft::new(config.spectrogram.stft)?;
    let frame_mask = mask.frame_mask(&config.spectrogram.stft, config.corpus.clip_len());
    let full: Vec<bool> = (0..config.spectrogram.stft.freq_bins()).flat_map(|_| frame_mask.iter().copied()).collect();
    let (mut l1, mut perc, mut passed, mut mid) = (0.0, 0.0, 0usize, 0usize);
    for clip in eval_clips {
        let truth = engine.forward(clip)?.magnitude()?.log_compress()?;
        let predicted = net.forward_spectrogram(&truth, &to_weights(&frame_mask))?;
        let pasted = paste_back_spectrogram(&predicted, &truth, &frame_mask)?;
        l1 += masked_l1(pasted.real_bins()?, truth.real_bins()?, &full)?.value;
        perc += perceptual_distance(&spec_tensor(&pasted)?, &spec_tensor(&truth)?, backbone)?;
        let d = detect(&pasted.log_expand()?, &frame_mask, &config.detector)?;
        passed += d.success as usize;
        mid += d.mid_mask_silence as usize;
    }
    let n = eval_clips.len() as f64;
    let pass_rate = passed as f64 / n;
    Ok(AblationRow {
        mask_seconds,
        mask_frames: frame_mask.iter().filter(|m| **m).count(),
        receptive_field: rf,
        l1: l1 / n,
        spec_perc: perc / n,
        success: pass_rate >= config.quorum,
        pass_rate,
        mid_silence_rate: mid as f64 / n,
    })
}

fn spec_tensor(log_mag: &Spectrogram) -> Result<Tensor> {
    Tensor::new(vec![1, 1, log_mag.freq_bins(), log_mag.frames()], log_mag.real_bins()?.to_vec())
}

/// Full grid, rows ordered by mask length then architecture; cells run on
/// up to `jobs` threads.
pub fn ablate(config: &AblationConfig, backbone: &PerceptualBackbone, jobs: usize) -> Result<Vec<AblationRow>> {
    config.validate()?;
    let corpus = generate_corpus(&config.corpus)?;
    let train_clips: Vec<_> = corpus.split(Split::Train).into_iter().map(|c| c.clip.clone()).collect();
    let test: Vec<_> = corpus.split(Split::Test).into_iter().map(|c| c.clip.clone()).collect();
    let n = config.eval_clips.map_or(test.len(), |n| n.min(test.len()));
    let eval_clips = spread(&test, n);
    let cells: Vec<(f64, usize)> = config
        .mask_seconds
        .iter()
        .flat_map(|s| (0..config.dilations.len()).map(move |a| (*s, a)))
        .collect();
    par_map(&cells, jobs, |(s, arch)| run_cell(config, *arch, *s, &train_clips, &eval_clips, backbone))
}

/// `n` items spread evenly over `items` (keeps every class represented).
fn spread<T: Clone>(items: &[T], n: usize) -> Vec<T> {
    (0..n).map(|i| items[i * items.len() / n.max(1)].clone()).collect()
}

pub fn write_ablation_csv(path: &Path, rows: &[AblationRow]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_ablation_csv(path: &Path) -> Result<Vec<AblationRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Smallest receptive field from which every larger tested one succeeds,
/// per mask length (`None` when the largest one fails).
pub fn thresholds(rows: &[AblationRow]) -> Vec<(f64, Option<usize>)> {
    let mut masks: Vec<f64> = Vec::new();
    for r in rows {
        if !masks.contains(&r.mask_seconds) {
            masks.push(r.mask_seconds);
        }
    }
    masks
        .into_iter()
        .map(|m| {
            let mut cells: Vec<&AblationRow> = rows.iter().filter(|r| r.mask_seconds == m).collect();
            cells.sort_by_key(|r| r.receptive_field);
            let mut threshold = None;
            for r in cells.iter().rev() {
                if r.success {
                    threshold = Some(r.receptive_field);
                } else {
                    break;
                }
            }
            (m, threshold)
        })
        .collect()
}
