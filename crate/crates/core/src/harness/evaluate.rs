use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autograd::checkpoint::encode_params;
use crate::dsp::griffin_lim::{griffin_lim, PhaseSeed};
use crate::dsp::{AudioClip, Stft};
use crate::error::{Error, Result};
use crate::losses::{masked_l1, perceptual_distance_clips, ssim, MetricRecord, PerceptualBackbone, SsimWindow};
use crate::mask::MaskSpec;
use crate::models::{inpaint, InpaintRequest, Network, SpectrogramOptions};
use crate::seed;

use super::corpus::{sha256_hex, CorpusClip};
use super::masking::{zero_interval, MaskPolicy};
use super::parallel::par_map;

/// What produces the evaluated output.
#[derive(Clone, Copy, Debug)]
pub enum Pipeline<'a> {
    /// A trained network routed through its domain's pipeline.
    Model(&'a Network),
    /// The masked input itself (silence in the gap).
    MaskedInput,
    /// Griffin-Lim from the magnitude of the unmasked truth.
    GriffinLimGt,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub mask: MaskPolicy,
    pub spectrogram: SpectrogramOptions,
    pub ssim_window: SsimWindow,
    /// Root seed for the Griffin-Lim reference row's random phases.
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            mask: MaskPolicy::Fixed {
                start_seconds: 0.4,
                end_seconds: 0.6,
            },
            spectrogram: SpectrogramOptions::default(),
            ssim_window: SsimWindow::Gaussian,
            seed: 0,
        }
    }
}

/// Backbones for the two perceptual columns.
#[derive(Clone, Copy, Debug)]
pub struct Backbones<'a> {
    pub waveform: &'a PerceptualBackbone,
    pub spectrogram: &'a PerceptualBackbone,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClipRow {
    pub clip_id: String,
    pub ml1: f64,
    pub ssim: f64,
    pub wave_pdist: f64,
    pub spec_pdist: f64,
    pub spec_ml1: f64,
}

impl ClipRow {
    fn new(clip_id: &str, r: &MetricRecord) -> Self {
        Self {
            clip_id: clip_id.to_string(),
            ml1: r.masked_l1,
            ssim: r.ssim,
            wave_pdist: r.wave_perc_dist,
            spec_pdist: r.spec_perc_dist,
            spec_ml1: r.spec_masked_l1,
        }
    }

    pub fn record(&self) -> MetricRecord {
        MetricRecord {
            masked_l1: self.ml1,
            ssim: self.ssim,
            wave_perc_dist: self.wave_pdist,
            spec_perc_dist: self.spec_pdist,
            spec_masked_l1: self.spec_ml1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportSection {
    pub name: String,
    pub rows: Vec<ClipRow>,
    pub aggregate: MetricRecord,
}

/// Column means in row order.
pub fn aggregate(rows: &[ClipRow]) -> MetricRecord {
    let n = rows.len().max(1) as f64;
    let mean = |f: fn(&ClipRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
    MetricRecord {
        masked_l1: mean(|r| r.ml1),
        ssim: mean(|r| r.ssim),
        wave_perc_dist: mean(|r| r.wave_pdist),
        spec_perc_dist: mean(|r| r.spec_pdist),
        spec_masked_l1: mean(|r| r.spec_ml1),
    }
}

/// Metrics of one output clip against the truth.
pub fn clip_metrics(
    output: &AudioClip,
    truth: &AudioClip,
    mask: &MaskSpec,
    config: &EvalConfig,
    backbones: Backbones<'_>,
) -> Result<MetricRecord> {
    let sample_mask = mask.sample_mask(truth.len());
    let ml1 = masked_l1(output.samples(), truth.samples(), &sample_mask)?.value;
    let stft = Stft::new(config.spectrogram.stft)?;
    let lo = stft.forward(output)?.magnitude()?.log_compress()?;
    let lt = stft.forward(truth)?.magnitude()?.log_compress()?;
    let (rows, cols) = (lt.freq_bins(), lt.frames());
    let s = ssim(lo.real_bins()?, lt.real_bins()?, rows, cols, config.ssim_window)?;
    let fmask = mask.frame_mask(&config.spectrogram.stft, truth.len());
    let full: Vec<bool> = (0..rows).flat_map(|_| fmask.iter().copied()).collect();
    let spec_ml1 = masked_l1(lo.real_bins()?, lt.real_bins()?, &full)?.value;
    let record = MetricRecord {
        masked_l1: ml1,
        ssim: s,
        wave_perc_dist: perceptual_distance_clips(output, truth, backbones.waveform)?,
        spec_perc_dist: perceptual_distance_clips(output, truth, backbones.spectrogram)?,
        spec_masked_l1: spec_ml1,
    };
    record.validate()?;
    Ok(record)
}

/// Output of `pipeline` for one clip, paste-backed where the pipeline does so.
pub fn pipeline_output(pipeline: Pipeline<'_>, clip: &CorpusClip, mask: &MaskSpec, config: &EvalConfig) -> Result<AudioClip> {
    match pipeline {
        Pipeline::Model(net) => {
            let request = InpaintRequest::new(clip.clip.clone(), *mask)?;
            inpaint(net, &request, &config.spectrogram)
        }
        Pipeline::MaskedInput => zero_interval(&clip.clip, mask),
        Pipeline::GriffinLimGt => {
            let mag = Stft::new(config.spectrogram.stft)?.forward(&clip.clip)?.magnitude()?;
            let phase_seed = seed::derive_seed(config.seed, &format!("gl-gt/{}", clip.id));
            griffin_lim(&mag, config.spectrogram.griffin_lim_iterations, PhaseSeed::Random(phase_seed))
        }
    }
}

/// Evaluate one pipeline on `clips` under the configured fixed mask,
/// spreading clips over `jobs` threads.
pub fn evaluate(
    name: &str,
    pipeline: Pipeline<'_>,
    clips: &[&CorpusClip],
    config: &EvalConfig,
    backbones: Backbones<'_>,
    jobs: usize,
) -> Result<ReportSection> {
    if clips.is_empty() {
        return Err(Error::Data("no clips to evaluate".into()));
    }
    let rows = par_map(clips, jobs, |clip| {
        let mask = config.mask.resolve(clip.clip.len(), clip.clip.sample_rate())?;
        let out = pipeline_output(pipeline, clip, &mask, config)?;
        Ok(ClipRow::new(&clip.id, &clip_metrics(&out, &clip.clip, &mask, config, backbones)?))
    })?;
    Ok(ReportSection {
        name: name.to_string(),
        aggregate: aggregate(&rows),
        rows,
    })
}

/// Provenance of a report.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub corpus: String,
    pub corpus_spec_hash: String,
    pub eval: Option<EvalConfig>,
    /// Section name to model-config hash.
    pub model_config_hashes: BTreeMap<String, String>,
    /// Section name to weight hash.
    pub weight_hashes: BTreeMap<String, String>,
    pub seeds: BTreeMap<String, u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub run: RunInfo,
    pub sections: Vec<ReportSection>,
}

/// Table-style summary written as `report.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateSummary {
    pub run: RunInfo,
    pub rows: BTreeMap<String, MetricRecord>,
    pub clip_counts: BTreeMap<String, usize>,
}

impl BenchmarkReport {
    pub fn section(&self, name: &str) -> Option<&ReportSection> {
        self.sections.iter().find(|s| s.name == name)
    }

    pub fn summary(&self) -> AggregateSummary {
        AggregateSummary {
            run: self.run.clone(),
            rows: self.sections.iter().map(|s| (s.name.clone(), s.aggregate)).collect(),
            clip_counts: self.sections.iter().map(|s| (s.name.clone(), s.rows.len())).collect(),
        }
    }

    /// `<section>.csv` per section and `report.json` with the aggregates.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for s in &self.sections {
            write_rows_csv(&dir.join(format!("{}.csv", s.name)), &s.rows)?;
        }
        let path = dir.join("report.json");
        fs::write(&path, serde_json::to_string_pretty(&self.summary())? + "\n").map_err(|e| Error::io(&path, e))
    }
}

pub fn write_rows_csv(path: &Path, rows: &[ClipRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_rows_csv(path: &Path) -> Result<Vec<ClipRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// SHA-256 of a network's serialized weights.
pub fn weights_hash(net: &Network) -> String {
    sha256_hex(&encode_params(&net.params))
}

pub fn config_hash<T: Serialize>(value: &T) -> Result<String> {
    Ok(sha256_hex(serde_json::to_string(value)?.as_bytes()))
}
