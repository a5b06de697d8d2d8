use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::autograd::layers::{bind_params, check_params, forward_layers};
use crate::autograd::{checkpoint, Activation, Adam, AdamConfig, Graph, LayerKind, LayerParams, LayerSpec, Tensor, Var};
use crate::dsp::{AudioClip, Stft, StftParams};
use crate::error::{Error, Result};
use crate::models::{Domain, ModelConfig};
use crate::seed;

/// Conv stack, global average pool and a dense class head.
pub fn default_backbone(domain: Domain, class_count: usize) -> ModelConfig {
    let act = Activation::leaky();
    let mut layers = Vec::new();
    let last = match domain {
        Domain::Waveform => {
            let widths = [16, 32, 32, 64, 64, 64];
            let mut c = 1;
            for w in widths {
                layers.push(LayerSpec::conv1d(c, w, 9, 4, 1, act));
                c = w;
            }
            c
        }
        Domain::Spectrogram => {
            let widths = [8, 16, 32, 32, 64];
            let mut c = 1;
            for w in widths {
                layers.push(LayerSpec::conv2d(c, w, [3, 3], [2, 2], [1, 1], act));
                c = w;
            }
            c
        }
    };
    layers.push(LayerSpec::global_avg_pool());
    layers.push(LayerSpec::dense(last, class_count));
    ModelConfig {
        domain,
        input_channels: 1,
        output_channels: class_count,
        layers,
    }
}

/// Check a classifier layout and return the feature-tap index: the last
/// layer before the pooling head.
pub fn backbone_tap(config: &ModelConfig) -> Result<usize> {
    let n = config.layers.len();
    if n < 3 || config.layers[n - 2].kind != LayerKind::GlobalAvgPool || config.layers[n - 1].kind != LayerKind::Dense {
        return Err(Error::InvalidParams("backbone must end with global_avg_pool then dense".into()));
    }
    let dims = match config.domain {
        Domain::Waveform => LayerKind::Conv1d,
        Domain::Spectrogram => LayerKind::Conv2d,
    };
    let mut c = config.input_channels;
    for (i, layer) in config.layers[..n - 2].iter().enumerate() {
        layer.validate()?;
        match layer.kind {
            k if k == dims => {
                if layer.in_channels != c {
                    return Err(Error::InvalidParams(format!("backbone layer {i} expects {} channels, gets {c}", layer.in_channels)));
                }
                c = layer.out_channels;
            }
            LayerKind::Activation => {}
            other => {
                return Err(Error::InvalidParams(format!("backbone layer {i}: {} not allowed", other.name())));
            }
        }
    }
    let head = &config.layers[n - 1];
    head.validate()?;
    if head.in_channels != c || head.out_channels != config.output_channels || c == 0 {
        return Err(Error::InvalidParams(format!(
            "dense head [{} -> {}] does not fit {c} features and {} classes",
            head.in_channels, head.out_channels, config.output_channels
        )));
    }
    Ok(n - 3)
}

/// Metadata stored next to the backbone weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackboneMeta {
    pub config: ModelConfig,
    pub feature_tap: usize,
    pub class_count: usize,
    pub trained: bool,
    pub accuracy: Option<f64>,
    pub stft: StftParams,
}

/// Frozen classifier whose tap-layer activations define perceptual
/// features.
#[derive(Clone, Debug, PartialEq)]
pub struct PerceptualBackbone {
    pub meta: BackboneMeta,
    pub params: Vec<LayerParams>,
}

impl PerceptualBackbone {
    pub fn init(config: ModelConfig, seed_value: u64) -> Result<Self> {
        let feature_tap = backbone_tap(&config)?;
        let mut rng = seed::rng(seed_value);
        let params = config.layers.iter().map(|l| l.init_params(&mut rng)).collect();
        Ok(Self {
            meta: BackboneMeta {
                class_count: config.output_channels,
                config,
                feature_tap,
                trained: false,
                accuracy: None,
                stft: StftParams::default(),
            },
            params,
        })
    }

    pub fn domain(&self) -> Domain {
        self.meta.config.domain
    }

    pub fn feature_tap(&self) -> usize {
        self.meta.feature_tap
    }

    pub fn is_trained(&self) -> bool {
        self.meta.trained
    }

    fn require_trained(&self) -> Result<()> {
        if !self.meta.trained {
            return Err(Error::Training("perceptual backbone has not been trained".into()));
        }
        Ok(())
    }

    /// Backbone input for a clip: the raw waveform `[1, 1, L]` or the
    /// log-magnitude spectrogram `[1, 1, F, T]`.
    pub fn input_for_clip(&self, clip: &AudioClip) -> Result<Tensor> {
        clip_input(self.domain(), &self.meta.stft, clip)
    }

    /// Tap-layer activations of `input`, with weights as constants.
    pub fn features(&self, graph: &mut Graph, input: Var) -> Result<Var> {
        let tap = self.meta.feature_tap;
        let vars = bind_params(graph, &self.params[..=tap], false);
        let (y, _) = forward_layers(graph, &self.meta.config.layers[..=tap], &vars, input, None)?;
        Ok(y)
    }

    pub fn feature_values(&self, input: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let x = g.constant(input.clone());
        let y = self.features(&mut g, x)?;
        Ok(g.value(y).clone())
    }

    /// Class logits `[N, K]` with the given parameter leaves.
    fn logits(&self, graph: &mut Graph, vars: &[Vec<Var>], input: Var) -> Result<Var> {
        Ok(forward_layers(graph, &self.meta.config.layers, vars, input, None)?.0)
    }

    pub fn predict(&self, input: &Tensor) -> Result<Vec<usize>> {
        let mut g = Graph::new();
        let vars = bind_params(&mut g, &self.params, false);
        let x = g.constant(input.clone());
        let z = self.logits(&mut g, &vars, x)?;
        let k = self.meta.class_count;
        Ok(g.value(z)
            .data()
            .chunks(k)
            .map(|row| {
                row.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (i, v)| if *v > best.1 { (i, *v) } else { best })
                    .0
            })
            .collect())
    }

    /// Writes `<stem>.json` and `<stem>.ckpt`.
    pub fn save(&self, stem: &Path) -> Result<()> {
        let json = stem.with_extension("json");
        checkpoint::ensure_parent(&json)?;
        fs::write(&json, serde_json::to_string_pretty(&self.meta)?).map_err(|e| Error::io(&json, e))?;
        checkpoint::save_params(&stem.with_extension("ckpt"), &self.params)
    }

    pub fn load(stem: &Path) -> Result<Self> {
        let json = stem.with_extension("json");
        let text = fs::read_to_string(&json).map_err(|e| Error::io(&json, e))?;
        let meta: BackboneMeta = serde_json::from_str(&text)?;
        if backbone_tap(&meta.config)? != meta.feature_tap {
            return Err(Error::Data("backbone feature tap does not match its layers".into()));
        }
        let params = checkpoint::load_params(&stem.with_extension("ckpt"))?;
        check_params(&meta.config.layers, &params)?;
        Ok(Self { meta, params })
    }
}

pub fn clip_input(domain: Domain, stft: &StftParams, clip: &AudioClip) -> Result<Tensor> {
    match domain {
        Domain::Waveform => Tensor::new(vec![1, 1, clip.len()], clip.samples().to_vec()),
        Domain::Spectrogram => {
            let spec = Stft::new(*stft)?.forward(clip)?.magnitude()?.log_compress()?;
            Tensor::new(vec![1, 1, spec.freq_bins(), spec.frames()], spec.real_bins()?.to_vec())
        }
    }
}

/// `sum |Ψ(output) - Ψ(target)| / N_Ψ` on backbone inputs of equal shape.
pub fn perceptual_distance(output: &Tensor, target: &Tensor, backbone: &PerceptualBackbone) -> Result<f64> {
    backbone.require_trained()?;
    if output.shape() != target.shape() {
        return Err(Error::Shape(format!("{:?} vs {:?}", output.shape(), target.shape())));
    }
    let a = backbone.feature_values(output)?;
    let b = backbone.feature_values(target)?;
    let n = a.numel() as f64;
    Ok(a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).sum::<f64>() / n)
}

/// Perceptual distance between two clips in the backbone's own domain.
pub fn perceptual_distance_clips(output: &AudioClip, target: &AudioClip, backbone: &PerceptualBackbone) -> Result<f64> {
    perceptual_distance(&backbone.input_for_clip(output)?, &backbone.input_for_clip(target)?, backbone)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub l1: f64,
    pub perceptual: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { l1: 1.0, perceptual: 0.1 }
    }
}

impl LossWeights {
    pub fn l1_only() -> Self {
        Self { l1: 1.0, perceptual: 0.0 }
    }

    pub fn validate(&self, backbone: Option<&PerceptualBackbone>) -> Result<()> {
        if !(self.l1 > 0.0) || !(self.perceptual >= 0.0) {
            return Err(Error::InvalidParams(format!("loss weights {self:?} need l1 > 0 and perceptual >= 0")));
        }
        if self.perceptual > 0.0 && backbone.is_none() {
            return Err(Error::InvalidParams("perceptual weight > 0 needs a backbone".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub l1: f64,
    pub perceptual: f64,
}

/// `λ_l1 · masked_l1 + λ_perc · perceptual_distance` on the graph. The
/// perceptual term compares `output` with `target` reshaped to the output's
/// shape; it is skipped when its weight is 0.
pub fn combined_loss(
    graph: &mut Graph,
    output: Var,
    target: &[f64],
    mask: &[f64],
    weights: LossWeights,
    backbone: Option<&PerceptualBackbone>,
) -> Result<(Var, LossBreakdown)> {
    weights.validate(backbone)?;
    let l1 = graph.masked_l1(output, target, mask)?;
    let l1_value = graph.value(l1).item();
    let mut total = graph.scale(l1, weights.l1);
    let mut perceptual = 0.0;
    if weights.perceptual > 0.0 {
        let bb = backbone.expect("checked by validate");
        bb.require_trained()?;
        let shape = graph.value(output).shape().to_vec();
        let t = graph.constant(Tensor::new(shape, target.to_vec())?);
        let fo = bb.features(graph, output)?;
        let ft = bb.features(graph, t)?;
        let d = graph.mean_abs_diff(fo, ft)?;
        perceptual = graph.value(d).item();
        let d = graph.scale(d, weights.perceptual);
        total = graph.add(total, d)?;
    }
    let breakdown = LossBreakdown {
        total: graph.value(total).item(),
        l1: l1_value,
        perceptual,
    };
    Ok((total, breakdown))
}

/// A classifier input with its label.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledInput {
    pub input: Tensor,
    pub label: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSchedule {
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for ClassifierSchedule {
    fn default() -> Self {
        Self {
            steps: 300,
            batch: 8,
            lr: 2e-3,
            seed: 0,
        }
    }
}

/// Minimum accepted held-out accuracy for [`train_backbone`].
pub const MIN_BACKBONE_ACCURACY: f64 = 0.6;
pub const MIN_EXAMPLES_PER_CLASS: usize = 20;

fn stack(items: &[&LabeledInput]) -> Result<(Tensor, Vec<usize>)> {
    let shape = items[0].input.shape();
    if items.iter().any(|i| i.input.shape() != shape || i.input.shape()[0] != 1) {
        return Err(Error::Shape("classifier inputs must share one [1, C, ...] shape".into()));
    }
    let mut full = shape.to_vec();
    full[0] = items.len();
    let data = items.iter().flat_map(|i| i.input.data().iter().copied()).collect();
    Ok((Tensor::new(full, data)?, items.iter().map(|i| i.label).collect()))
}

/// Fraction of `data` the backbone labels correctly.
pub fn accuracy(backbone: &PerceptualBackbone, data: &[LabeledInput]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Data("no examples to score".into()));
    }
    let mut correct = 0;
    for chunk in data.chunks(16) {
        let refs: Vec<&LabeledInput> = chunk.iter().collect();
        let (x, labels) = stack(&refs)?;
        correct += backbone.predict(&x)?.iter().zip(&labels).filter(|(p, l)| p == l).count();
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Cross-entropy training with Adam; returns the backbone (marked trained)
/// and its held-out accuracy, whatever that accuracy is.
pub fn fit_classifier(
    config: ModelConfig,
    train: &[LabeledInput],
    heldout: &[LabeledInput],
    schedule: &ClassifierSchedule,
) -> Result<(PerceptualBackbone, f64)> {
    if train.is_empty() || heldout.is_empty() {
        return Err(Error::Data("classifier training needs train and held-out examples".into()));
    }
    let classes = config.output_channels;
    if let Some(bad) = train.iter().chain(heldout).find(|e| e.label >= classes) {
        return Err(Error::Data(format!("label {} outside {classes} classes", bad.label)));
    }
    let mut bb = PerceptualBackbone::init(config, seed::derive_seed(schedule.seed, "backbone-init"))?;
    let mut adam = Adam::new(
        AdamConfig {
            lr: schedule.lr,
            ..Default::default()
        },
        &bb.params.iter().flat_map(|p| &p.tensors).collect::<Vec<_>>(),
    );
    let mut rng = seed::rng(seed::derive_seed(schedule.seed, "backbone-order"));
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut cursor = order.len();
    for _ in 0..schedule.steps {
        let mut batch = Vec::with_capacity(schedule.batch);
        while batch.len() < schedule.batch.max(1) {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(&train[order[cursor]]);
            cursor += 1;
        }
        let (x, labels) = stack(&batch)?;
        let mut g = Graph::new();
        let vars = bind_params(&mut g, &bb.params, true);
        let xv = g.constant(x);
        let z = bb.logits(&mut g, &vars, xv)?;
        let loss = g.softmax_cross_entropy(z, &labels)?;
        if !g.value(loss).item().is_finite() {
            return Err(Error::Numeric("classifier loss became non-finite".into()));
        }
        let mut grads = g.backward(loss)?;
        let gs: Vec<Vec<f64>> = vars.iter().flatten().map(|v| grads.take(*v).unwrap_or_default()).collect();
        let gref: Vec<&[f64]> = gs.iter().map(Vec::as_slice).collect();
        let mut ps: Vec<&mut Tensor> = bb.params.iter_mut().flat_map(|p| &mut p.tensors).collect();
        adam.step(&mut ps, &gref)?;
    }
    let acc = accuracy(&bb, heldout)?;
    bb.meta.trained = true;
    bb.meta.accuracy = Some(acc);
    Ok((bb, acc))
}

/// [`fit_classifier`] with corpus-size checks, aborting when held-out
/// accuracy stays below [`MIN_BACKBONE_ACCURACY`].
pub fn train_backbone(
    config: ModelConfig,
    train: &[LabeledInput],
    heldout: &[LabeledInput],
    schedule: &ClassifierSchedule,
) -> Result<(PerceptualBackbone, f64)> {
    let classes = config.output_channels;
    if classes < 2 {
        return Err(Error::Data("a backbone needs at least 2 classes".into()));
    }
    for c in 0..classes {
        let n = train.iter().chain(heldout).filter(|e| e.label == c).count();
        if n < MIN_EXAMPLES_PER_CLASS {
            return Err(Error::Data(format!("class {c} has {n} examples, need {MIN_EXAMPLES_PER_CLASS}")));
        }
    }
    let (bb, acc) = fit_classifier(config, train, heldout, schedule)?;
    if acc < MIN_BACKBONE_ACCURACY {
        let mut per_class = Vec::new();
        for c in 0..classes {
            let subset: Vec<LabeledInput> = heldout.iter().filter(|e| e.label == c).cloned().collect();
            if !subset.is_empty() {
                per_class.push(format!("class {c}: {:.2}", accuracy(&bb, &subset)?));
            }
        }
        return Err(Error::Training(format!(
            "backbone reached {:.1}% held-out accuracy after {} steps (need {:.0}%); {}",
            acc * 100.0,
            schedule.steps,
            MIN_BACKBONE_ACCURACY * 100.0,
            per_class.join(", ")
        )));
    }
    Ok((bb, acc))
}
