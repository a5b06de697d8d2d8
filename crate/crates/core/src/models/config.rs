use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autograd::receptive::receptive_field_axes;
use crate::autograd::{Activation, LayerKind, LayerSpec};
use crate::error::{Error, Result};

/// Samples in the default evaluation mask (0.2 s at 16 kHz).
pub const DEFAULT_EVAL_MASK_SAMPLES: usize = 3200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Waveform,
    Spectrogram,
}

impl Domain {
    pub fn name(self) -> &'static str {
        match self {
            Domain::Waveform => "waveform",
            Domain::Spectrogram => "spectrogram",
        }
    }
}

/// Architecture of an inpainting network or classifier backbone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub domain: Domain,
    pub input_channels: usize,
    pub output_channels: usize,
    pub layers: Vec<LayerSpec>,
}

impl ModelConfig {
    /// Strided gated encoder, a dilated gated stack at 1/16 of the sample
    /// rate, then a nearest-upsampling decoder. The masked input is appended
    /// again at full rate ahead of two gated layers and a `tanh` output, so
    /// waveform detail at the mask edges does not have to pass through the
    /// bottleneck.
    pub fn default_waveform() -> Self {
        let mut layers = vec![
            LayerSpec::gated_conv1d(2, 16, 9, 4, 1),
            LayerSpec::gated_conv1d(16, 32, 9, 4, 1),
        ];
        let mut c = 32;
        for d in [1, 2, 4, 8, 16] {
            layers.push(LayerSpec::gated_conv1d(c, 64, 9, 1, d));
            c = 64;
        }
        layers.extend([
            LayerSpec::upsample(vec![4]),
            LayerSpec::gated_conv1d(64, 32, 9, 1, 1),
            LayerSpec::upsample(vec![4]),
            LayerSpec::skip_input(),
            LayerSpec::gated_conv1d(34, 16, 9, 1, 1),
            LayerSpec::gated_conv1d(16, 16, 9, 1, 4),
            LayerSpec::conv1d(16, 1, 9, 1, 1, Activation::Tanh),
        ]);
        let config = Self {
            domain: Domain::Waveform,
            input_channels: 2,
            output_channels: 1,
            layers,
        };
        assert!(config.receptive_field().expect("default waveform config is valid") >= DEFAULT_EVAL_MASK_SAMPLES);
        config
    }

    /// Spectrogram network with frequency striding and a time-only dilation
    /// pyramid.
    pub fn default_spectrogram() -> Self {
        Self::spectrogram_with_dilations(24, &[1, 1, 2, 4, 8, 4, 2])
    }

    /// A spectrogram network whose time receptive field is set by the
    /// dilation list. Channel widths and frequency handling are fixed, so
    /// only the dilations move the receptive field.
    pub fn spectrogram_with_dilations(width: usize, time_dilations: &[usize]) -> Self {
        let half = (width / 2).max(1);
        let mut layers = vec![
            LayerSpec::gated_conv2d(2, half, [5, 3], [2, 1], [1, 1]),
            LayerSpec::gated_conv2d(half, width, [3, 3], [2, 1], [1, 1]),
        ];
        for &d in time_dilations {
            layers.push(LayerSpec::gated_conv2d(width, width, [3, 3], [1, 1], [1, d]));
        }
        layers.extend([
            LayerSpec::upsample(vec![2, 1]),
            LayerSpec::gated_conv2d(width, half, [3, 3], [1, 1], [1, 1]),
            LayerSpec::upsample(vec![2, 1]),
            LayerSpec::conv2d(half, 1, [3, 3], [1, 1], [1, 1], Activation::Softplus),
        ]);
        Self {
            domain: Domain::Spectrogram,
            input_channels: 2,
            output_channels: 1,
            layers,
        }
    }

    pub fn default_for(domain: Domain) -> Self {
        match domain {
            Domain::Waveform => Self::default_waveform(),
            Domain::Spectrogram => Self::default_spectrogram(),
        }
    }

    pub fn spatial_dims(&self) -> usize {
        match self.domain {
            Domain::Waveform => 1,
            Domain::Spectrogram => 2,
        }
    }

    /// Check layer kinds, channel flow and that every downsampling is undone.
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::InvalidParams("model has no layers".into()));
        }
        let dims = self.spatial_dims();
        let mut c = self.input_channels;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.validate()?;
            let layer_dims = match layer.kind {
                LayerKind::Conv1d | LayerKind::GatedConv1d => Some(1),
                LayerKind::Conv2d | LayerKind::GatedConv2d => Some(2),
                LayerKind::UpsampleNearest => Some(layer.factor.len()),
                _ => None,
            };
            if layer_dims.is_some_and(|d| d != dims) {
                return Err(Error::InvalidParams(format!(
                    "layer {i} ({}) does not match the {} domain",
                    layer.kind.name(),
                    self.domain.name()
                )));
            }
            if matches!(layer.kind, LayerKind::GlobalAvgPool | LayerKind::Dense) {
                return Err(Error::InvalidParams(format!(
                    "layer {i}: {} is not allowed in an inpainting network",
                    layer.kind.name()
                )));
            }
            if layer.kind == LayerKind::SkipInput {
                c += self.input_channels;
            }
            if layer.kind.is_conv() {
                if layer.in_channels != c {
                    return Err(Error::InvalidParams(format!(
                        "layer {i} expects {} channels but receives {c}",
                        layer.in_channels
                    )));
                }
                c = layer.out_channels;
            }
        }
        if c != self.output_channels {
            return Err(Error::InvalidParams(format!(
                "network ends with {c} channels, expected {}",
                self.output_channels
            )));
        }
        let (down, up) = self.scale_factors()?;
        if down != up {
            return Err(Error::InvalidParams(format!(
                "downsampling {down:?} is not undone by upsampling {up:?}"
            )));
        }
        receptive_field_axes(&self.layers)?;
        Ok(())
    }

    /// Total stride and total upsampling per `[height, width]` axis.
    pub fn scale_factors(&self) -> Result<([usize; 2], [usize; 2])> {
        let mut down = [1, 1];
        let mut up = [1, 1];
        for layer in &self.layers {
            if layer.kind.is_conv() {
                let g = layer.geom()?;
                down[0] *= g.stride[0];
                down[1] *= g.stride[1];
            } else if layer.kind == LayerKind::UpsampleNearest {
                let f = layer.factors()?;
                up[0] *= f[0];
                up[1] *= f[1];
            }
        }
        Ok((down, up))
    }

    /// Receptive field along time: samples for waveform models, frames for
    /// spectrogram models.
    pub fn receptive_field(&self) -> Result<usize> {
        Ok(receptive_field_axes(&self.layers)?[1])
    }

    /// Receptive field per `[frequency, time]` axis.
    pub fn receptive_field_axes(&self) -> Result<[usize; 2]> {
        receptive_field_axes(&self.layers)
    }

    /// Time stride the input crop start must be aligned to so that crops see
    /// the same downsampling phase as the full signal.
    pub fn time_stride(&self) -> Result<usize> {
        Ok(self.scale_factors()?.0[1])
    }

    /// Smallest time extent every layer can accept.
    pub fn min_time_extent(&self) -> Result<usize> {
        let mut jump = 1usize;
        let mut need = 1usize;
        for layer in &self.layers {
            if layer.kind.is_conv() {
                let g = layer.geom()?;
                need = need.max(g.span(1) * jump);
                jump *= g.stride[1];
            } else if layer.kind == LayerKind::UpsampleNearest {
                jump /= layer.factors()?[1].max(1);
                jump = jump.max(1);
            }
        }
        Ok(need)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }
}
