use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Adam, AdamConfig, Graph, LayerParams, Tensor};
use crate::dsp::{AudioClip, Stft, StftParams};
use crate::error::{Error, Result};
use crate::losses::{combined_loss, masked_l1, LossBreakdown, LossWeights, PerceptualBackbone};
use crate::mask::{to_weights, MaskSpec};
use crate::models::{spectrogram_input, waveform_input, Domain, Network};
use crate::seed;

use super::masking::{random_mask, tile_crop_at, MaskPolicy};

/// Where training masks are placed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum TrainMask {
    /// A fresh uniformly placed interval of this length at every draw.
    Random { seconds: f64 },
    /// The same interval every time.
    Fixed { start_seconds: f64, end_seconds: f64 },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    Constant,
    /// Half-cosine from `lr` down to `lr * min_lr_ratio` at the last step.
    #[default]
    Cosine,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub schedule: LrSchedule,
    pub min_lr_ratio: f64,
    /// Linear ramp of the learning rate over the first steps.
    pub warmup_steps: usize,
    pub seed: u64,
    pub mask: TrainMask,
    pub loss: LossWeights,
    /// Tile-and-crop augmentation to the clip's own length.
    pub augment: bool,
    /// Validate every this many steps (0: only at the end).
    pub val_every: usize,
    /// Mask used for validation.
    pub val_mask: MaskPolicy,
    /// Stop as soon as the validation masked L1 drops below this value.
    pub target_l1: Option<f64>,
    pub stft: StftParams,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 3000,
            batch: 4,
            lr: 1e-3,
            schedule: LrSchedule::Cosine,
            min_lr_ratio: 0.05,
            warmup_steps: 100,
            seed: 0,
            mask: TrainMask::Random { seconds: 0.2 },
            loss: LossWeights::l1_only(),
            augment: false,
            val_every: 0,
            val_mask: MaskPolicy::Fixed {
                start_seconds: 0.4,
                end_seconds: 0.6,
            },
            target_l1: None,
            stft: StftParams::default(),
        }
    }
}

impl TrainConfig {
    pub fn lr_at(&self, step: usize) -> f64 {
        let ramp = if step < self.warmup_steps { (step + 1) as f64 / self.warmup_steps as f64 } else { 1.0 };
        ramp * match self.schedule {
            LrSchedule::Constant => self.lr,
            LrSchedule::Cosine => {
                let frac = if self.steps <= 1 { 0.0 } else { step as f64 / (self.steps - 1) as f64 };
                let floor = self.lr * self.min_lr_ratio;
                floor + (self.lr - floor) * 0.5 * (1.0 + (PI * frac).cos())
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 || !(self.lr >= 0.0) || !(0.0..=1.0).contains(&self.min_lr_ratio) {
            return Err(Error::InvalidParams(format!(
                "batch {} / lr {} / min_lr_ratio {} invalid",
                self.batch, self.lr, self.min_lr_ratio
            )));
        }
        self.stft.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    pub step: usize,
    pub lr: f64,
    pub total: f64,
    pub l1: f64,
    pub perceptual: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub curve: Vec<LossPoint>,
    /// `(steps completed, validation masked L1)`.
    pub val_curve: Vec<(usize, f64)>,
    pub best_val: Option<(usize, f64)>,
    pub best_params: Option<Vec<LayerParams>>,
    pub steps_run: usize,
}

/// A training clip prepared for its domain.
#[derive(Clone, Debug)]
pub struct TrainItem {
    pub clip: AudioClip,
    /// Frequency-major log-magnitude (spectrogram models only).
    log_mag: Option<(Vec<f64>, usize, usize)>,
}

impl TrainItem {
    pub fn new(clip: AudioClip, domain: Domain, stft: &StftParams) -> Result<Self> {
        let log_mag = match domain {
            Domain::Waveform => None,
            Domain::Spectrogram => Some(log_magnitude(&clip, stft)?),
        };
        Ok(Self { clip, log_mag })
    }
}

pub fn log_magnitude(clip: &AudioClip, stft: &StftParams) -> Result<(Vec<f64>, usize, usize)> {
    let s = Stft::new(*stft)?.forward(clip)?.magnitude()?.log_compress()?;
    Ok((s.real_bins()?.to_vec(), s.freq_bins(), s.frames()))
}

/// Model input, loss target and loss mask for one masked example,
/// restricted to the context the masked outputs depend on.
#[derive(Clone, Debug)]
pub struct CropExample {
    pub input: Tensor,
    pub target: Vec<f64>,
    pub loss_mask: Vec<f64>,
}

/// Half-width of context kept on each side of the mask.
fn context_margin(net: &Network) -> Result<(usize, usize)> {
    let rf = net.config.receptive_field()?;
    let stride = net.config.time_stride()?;
    Ok((rf / 2 + 2 * stride, stride))
}

/// Time window `[lo, hi)` around the masked range `[a, b)` of an axis of
/// length `len`, with `lo` aligned to `stride`.
fn crop_window(a: usize, b: usize, len: usize, margin: usize, stride: usize, min_len: usize) -> (usize, usize) {
    let lo = a.saturating_sub(margin) / stride * stride;
    let mut hi = (b + margin).min(len);
    if hi - lo < min_len {
        hi = (lo + min_len).min(len);
    }
    let lo = if hi - lo < min_len { hi.saturating_sub(min_len) / stride * stride } else { lo };
    (lo, hi)
}

pub fn crop_example(net: &Network, item: &TrainItem, clip: &AudioClip, mask: &MaskSpec, stft: &StftParams) -> Result<CropExample> {
    let (margin, stride) = context_margin(net)?;
    let min_len = net.config.min_time_extent()?;
    match net.domain() {
        Domain::Waveform => {
            let s = clip.samples();
            let (lo, hi) = crop_window(mask.start, mask.end, s.len(), margin, stride, min_len);
            let m: Vec<f64> = (lo..hi).map(|i| if mask.contains(i) { 1.0 } else { 0.0 }).collect();
            Ok(CropExample {
                input: waveform_input(&s[lo..hi], &m)?,
                target: s[lo..hi].to_vec(),
                loss_mask: m,
            })
        }
        Domain::Spectrogram => {
            let (bins, freq, frames) = match (&item.log_mag, std::ptr::eq(clip, &item.clip)) {
                (Some(lm), true) => lm.clone(),
                _ => log_magnitude(clip, stft)?,
            };
            let fmask = mask.frame_mask(stft, clip.len());
            let first = fmask.iter().position(|b| *b).ok_or_else(|| Error::Mask("mask covers no frame".into()))?;
            let last = fmask.iter().rposition(|b| *b).unwrap_or(first);
            let (lo, hi) = crop_window(first, last + 1, frames, margin, stride, min_len);
            let width = hi - lo;
            let mut target = Vec::with_capacity(freq * width);
            for k in 0..freq {
                target.extend_from_slice(&bins[k * frames + lo..k * frames + hi]);
            }
            let m = to_weights(&fmask[lo..hi]);
            let loss_mask: Vec<f64> = (0..freq).flat_map(|_| m.iter().copied()).collect();
            Ok(CropExample {
                input: spectrogram_input(&target, freq, width, &m)?,
                target,
                loss_mask,
            })
        }
    }
}

fn draw_mask<R: Rng>(policy: &TrainMask, clip: &AudioClip, rng: &mut R) -> Result<MaskSpec> {
    match *policy {
        TrainMask::Random { seconds } => {
            let width = ((seconds * f64::from(clip.sample_rate())).round() as usize).max(1);
            random_mask(clip.len(), width, rng)
        }
        TrainMask::Fixed {
            start_seconds,
            end_seconds,
        } => MaskPolicy::Fixed {
            start_seconds,
            end_seconds,
        }
        .resolve(clip.len(), clip.sample_rate()),
    }
}

/// Masked L1 of the full-clip model output in the model's own domain:
/// samples for waveform models, log-magnitude bins of masked frames for
/// spectrogram models.
pub fn native_masked_l1(net: &Network, clip: &AudioClip, mask: &MaskSpec, stft: &StftParams) -> Result<f64> {
    match net.domain() {
        Domain::Waveform => {
            let m = mask.sample_mask(clip.len());
            let w = to_weights(&m);
            let out = net.forward_waveform(clip, &w)?;
            Ok(masked_l1(out.samples(), clip.samples(), &m)?.value)
        }
        Domain::Spectrogram => {
            let spec = Stft::new(*stft)?.forward(clip)?.magnitude()?.log_compress()?;
            let fmask = mask.frame_mask(stft, clip.len());
            let out = net.forward_spectrogram(&spec, &to_weights(&fmask))?;
            let full: Vec<bool> = (0..spec.freq_bins()).flat_map(|_| fmask.iter().copied()).collect();
            Ok(masked_l1(out.real_bins()?, spec.real_bins()?, &full)?.value)
        }
    }
}

/// Mean [`native_masked_l1`] over clips under a fixed mask policy.
pub fn validation_l1(net: &Network, clips: &[AudioClip], policy: &MaskPolicy, stft: &StftParams) -> Result<f64> {
    let mut total = 0.0;
    for clip in clips {
        let mask = policy.resolve(clip.len(), clip.sample_rate())?;
        total += native_masked_l1(net, clip, &mask, stft)?;
    }
    Ok(total / clips.len().max(1) as f64)
}

/// Train `net` in place. On a non-finite loss or gradient the weights are
/// left at the last good step and the error is returned.
pub fn train(
    net: &mut Network,
    train_clips: &[AudioClip],
    val_clips: &[AudioClip],
    config: &TrainConfig,
    backbone: Option<&PerceptualBackbone>,
) -> Result<TrainOutcome> {
    config.validate()?;
    config.loss.validate(backbone)?;
    if train_clips.is_empty() {
        return Err(Error::Data("no training clips".into()));
    }
    if let Some(bb) = backbone {
        if bb.domain() != net.domain() {
            return Err(Error::KindMismatch {
                expected: net.domain().name(),
                found: bb.domain().name(),
            });
        }
    }
    let items = train_clips
        .iter()
        .map(|c| TrainItem::new(c.clone(), net.domain(), &config.stft))
        .collect::<Result<Vec<_>>>()?;
    let mut adam = Adam::new(
        AdamConfig {
            lr: config.lr,
            ..Default::default()
        },
        &net.tensors(),
    );
    let mut rng = seed::rng(seed::derive_seed(config.seed, "train"));
    let mut outcome = TrainOutcome {
        curve: Vec::with_capacity(config.steps),
        val_curve: Vec::new(),
        best_val: None,
        best_params: None,
        steps_run: 0,
    };
    let validate = |net: &Network, outcome: &mut TrainOutcome, step: usize| -> Result<bool> {
        if val_clips.is_empty() {
            return Ok(false);
        }
        let v = validation_l1(net, val_clips, &config.val_mask, &config.stft)?;
        outcome.val_curve.push((step, v));
        if outcome.best_val.is_none_or(|(_, b)| v < b) {
            outcome.best_val = Some((step, v));
            outcome.best_params = Some(net.params.clone());
        }
        Ok(config.target_l1.is_some_and(|t| v < t))
    };
    for step in 0..config.steps {
        let lr = config.lr_at(step);
        let mut sums: Vec<Vec<f64>> = net.tensors().iter().map(|t| vec![0.0; t.numel()]).collect();
        let mut point = LossBreakdown::default();
        for _ in 0..config.batch {
            let item = &items[rng.random_range(0..items.len())];
            let augmented;
            let clip = if config.augment {
                let offset = rng.random_range(0..item.clip.len());
                augmented = tile_crop_at(&item.clip, item.clip.len(), offset)?;
                &augmented
            } else {
                &item.clip
            };
            let mask = draw_mask(&config.mask, clip, &mut rng)?;
            let ex = crop_example(net, item, clip, &mask, &config.stft)?;
            let mut g = Graph::new();
            let x = g.constant(ex.input);
            let (y, vars) = net.build(&mut g, x, true)?;
            let (loss, parts) = combined_loss(&mut g, y, &ex.target, &ex.loss_mask, config.loss, backbone)?;
            if !parts.total.is_finite() {
                return Err(Error::Numeric(format!("non-finite loss at step {step}")));
            }
            let loss = g.scale(loss, 1.0 / config.batch as f64);
            let mut grads = g.backward(loss)?;
            for (sum, v) in sums.iter_mut().zip(vars.iter().flatten()) {
                if let Some(gv) = grads.take(*v) {
                    sum.iter_mut().zip(gv).for_each(|(s, d)| *s += d);
                }
            }
            point.total += parts.total / config.batch as f64;
            point.l1 += parts.l1 / config.batch as f64;
            point.perceptual += parts.perceptual / config.batch as f64;
        }
        let grads: Vec<&[f64]> = sums.iter().map(Vec::as_slice).collect();
        adam.step_with_lr(&mut net.tensors_mut(), &grads, lr)
            .map_err(|e| Error::Numeric(format!("step {step}: {e}")))?;
        outcome.curve.push(LossPoint {
            step,
            lr,
            total: point.total,
            l1: point.l1,
            perceptual: point.perceptual,
        });
        outcome.steps_run = step + 1;
        let last = step + 1 == config.steps;
        if (config.val_every > 0 && (step + 1) % config.val_every == 0) || last {
            if validate(net, &mut outcome, step + 1)? {
                break;
            }
        }
    }
    if config.steps == 0 {
        validate(net, &mut outcome, 0)?;
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::{Activation, LayerSpec};
    use crate::models::ModelConfig;

    fn small_wave() -> ModelConfig {
        ModelConfig {
            domain: Domain::Waveform,
            input_channels: 2,
            output_channels: 1,
            layers: vec![
                LayerSpec::gated_conv1d(2, 4, 5, 2, 1),
                LayerSpec::gated_conv1d(4, 4, 5, 1, 4),
                LayerSpec::upsample(vec![2]),
                LayerSpec::conv1d(4, 1, 5, 1, 1, Activation::Tanh),
            ],
        }
    }

    fn tone(n: usize, f: f64) -> AudioClip {
        AudioClip::new((0..n).map(|i| 0.7 * (i as f64 * f).sin()).collect(), 16000).unwrap()
    }

    #[test]
    fn crops_reproduce_full_signal_outputs_on_the_mask() {
        for (config, len) in [
            (small_wave(), 1200),
            (ModelConfig::default_waveform(), 16000),
            (ModelConfig::spectrogram_with_dilations(8, &[1, 2, 4]), 16000),
        ] {
            let net = Network::init(config, 11).unwrap();
            let stft = StftParams::default();
            let clip = tone(len, 0.031);
            let item = TrainItem::new(clip.clone(), net.domain(), &stft).unwrap();
            let mask = MaskSpec::new(len / 2 - len / 20, len / 2 + len / 25, len).unwrap();
            let ex = crop_example(&net, &item, &clip, &mask, &stft).unwrap();
            let crop_out = net.infer(ex.input.clone()).unwrap();
            let full = match net.domain() {
                Domain::Waveform => {
                    let w = to_weights(&mask.sample_mask(len));
                    net.forward_waveform(&clip, &w).unwrap().into_samples()
                }
                Domain::Spectrogram => {
                    let spec = Stft::new(stft).unwrap().forward(&clip).unwrap().magnitude().unwrap().log_compress().unwrap();
                    let fm = to_weights(&mask.frame_mask(&stft, len));
                    net.forward_spectrogram(&spec, &fm).unwrap().real_bins().unwrap().to_vec()
                }
            };
            let masked_crop: Vec<f64> = crop_out.data().iter().zip(&ex.loss_mask).filter(|(_, m)| **m == 1.0).map(|(v, _)| *v).collect();
            let masked_full: Vec<f64> = match net.domain() {
                Domain::Waveform => full[mask.start..mask.end].to_vec(),
                Domain::Spectrogram => {
                    let fm = mask.frame_mask(&stft, len);
                    let frames = fm.len();
                    full.iter().enumerate().filter(|(i, _)| fm[i % frames]).map(|(_, v)| *v).collect()
                }
            };
            assert_eq!(masked_crop.len(), masked_full.len());
            for (a, b) in masked_crop.iter().zip(&masked_full) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn zero_lr_keeps_loss_constant_and_weights_fixed() {
        let mut net = Network::init(small_wave(), 1).unwrap();
        let before = net.clone();
        let cfg = TrainConfig {
            steps: 5,
            batch: 1,
            lr: 0.0,
            mask: TrainMask::Fixed {
                start_seconds: 0.03,
                end_seconds: 0.04,
            },
            ..Default::default()
        };
        let out = train(&mut net, &[tone(1200, 0.05)], &[], &cfg, None).unwrap();
        assert_eq!(net, before);
        assert!(out.curve.windows(2).all(|w| w[0].total == w[1].total));
    }

    #[test]
    fn same_seed_same_curve() {
        let cfg = TrainConfig {
            steps: 6,
            batch: 2,
            lr: 1e-2,
            mask: TrainMask::Random { seconds: 0.01 },
            ..Default::default()
        };
        let clips = [tone(1200, 0.05), tone(1200, 0.09)];
        let mut a = Network::init(small_wave(), 1).unwrap();
        let mut b = Network::init(small_wave(), 1).unwrap();
        let ca = train(&mut a, &clips, &[], &cfg, None).unwrap();
        let cb = train(&mut b, &clips, &[], &cfg, None).unwrap();
        assert_eq!(ca, cb);
        assert_eq!(a, b);
    }

    #[test]
    fn cosine_schedule_endpoints() {
        let cfg = TrainConfig {
            steps: 11,
            lr: 1.0,
            min_lr_ratio: 0.1,
            warmup_steps: 0,
            ..Default::default()
        };
        assert_eq!(cfg.lr_at(0), 1.0);
        assert!((cfg.lr_at(10) - 0.1).abs() < 1e-15);
        assert!((cfg.lr_at(5) - 0.55).abs() < 1e-15);
    }

    #[test]
    fn warmup_ramps_linearly_into_the_schedule() {
        let cfg = TrainConfig {
            steps: 100,
            lr: 1.0,
            schedule: LrSchedule::Constant,
            warmup_steps: 4,
            ..Default::default()
        };
        let lrs: Vec<f64> = (0..6).map(|s| cfg.lr_at(s)).collect();
        assert_eq!(lrs, vec![0.25, 0.5, 0.75, 1.0, 1.0, 1.0]);
    }
}
