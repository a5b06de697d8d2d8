use std::path::Path;

use crate::autograd::layers::{bind_params, check_params, forward_layers};
use crate::autograd::{checkpoint, Graph, LayerParams, Tensor, Var};
use crate::dsp::{AudioClip, Spectrogram, SpectrogramKind};
use crate::error::{Error, Result};
use crate::seed;

use super::config::{Domain, ModelConfig};

/// The output layer starts this much smaller than the rest, so a bounded
/// output nonlinearity begins in its linear range.
const OUTPUT_INIT_SCALE: f64 = 0.1;

/// A model configuration together with its weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    pub config: ModelConfig,
    pub params: Vec<LayerParams>,
}

impl Network {
    /// Fresh weights drawn from `seed`.
    pub fn init(config: ModelConfig, seed_value: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = seed::rng(seed_value);
        let params = config.layers.iter().map(|l| l.init_params(&mut rng)).collect();
        let mut net = Self { config, params };
        net.scale_output_layer(OUTPUT_INIT_SCALE);
        Ok(net)
    }

    fn scale_output_layer(&mut self, factor: f64) {
        if let Some(last) = self.params.iter_mut().rev().find(|p| !p.tensors.is_empty()) {
            for t in &mut last.tensors {
                t.data_mut().iter_mut().for_each(|v| *v *= factor);
            }
        }
    }

    pub fn from_parts(config: ModelConfig, params: Vec<LayerParams>) -> Result<Self> {
        config.validate()?;
        check_params(&config.layers, &params)?;
        Ok(Self { config, params })
    }

    pub fn domain(&self) -> Domain {
        self.config.domain
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().flat_map(|p| &p.tensors).map(Tensor::numel).sum()
    }

    /// Flat views of every parameter tensor in layer order.
    pub fn tensors(&self) -> Vec<&Tensor> {
        self.params.iter().flat_map(|p| &p.tensors).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.params.iter_mut().flat_map(|p| &mut p.tensors).collect()
    }

    /// Zero the weights and biases of the last convolution.
    pub fn zero_output_layer(&mut self) {
        self.scale_output_layer(0.0);
    }

    /// Add the network to `graph`, returning the output (cropped to the
    /// input's spatial extent) and the parameter leaves.
    pub fn build(&self, graph: &mut Graph, input: Var, trainable: bool) -> Result<(Var, Vec<Vec<Var>>)> {
        let vars = bind_params(graph, &self.params, trainable);
        let extent: Vec<usize> = graph.value(input).shape()[2..].to_vec();
        let (y, _) = forward_layers(graph, &self.config.layers, &vars, input, None)?;
        let out_shape = graph.value(y).shape()[2..].to_vec();
        if out_shape.len() != extent.len() || out_shape.iter().zip(&extent).any(|(o, e)| o < e) {
            return Err(Error::Shape(format!("network output {out_shape:?} is smaller than its input {extent:?}")));
        }
        let y = graph.crop(y, &extent)?;
        Ok((y, vars))
    }

    /// Evaluate on a prepared `[1, C, ...]` input tensor.
    pub fn infer(&self, input: Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let x = g.constant(input);
        let (y, _) = self.build(&mut g, x, false)?;
        let out = g.value(y).clone();
        if !out.all_finite() {
            return Err(Error::Numeric("network produced non-finite output".into()));
        }
        Ok(out)
    }

    fn expect_domain(&self, domain: Domain) -> Result<()> {
        if self.domain() != domain {
            return Err(Error::KindMismatch {
                expected: domain.name(),
                found: self.domain().name(),
            });
        }
        Ok(())
    }

    /// Run the waveform model on a masked clip with its per-sample mask
    /// (1 = masked). Returns the full-length model output.
    pub fn forward_waveform(&self, masked: &AudioClip, mask: &[f64]) -> Result<AudioClip> {
        self.expect_domain(Domain::Waveform)?;
        let input = waveform_input(masked.samples(), mask)?;
        let out = self.infer(input)?;
        AudioClip::new(out.into_data(), masked.sample_rate())
    }

    /// Run the spectrogram model on a masked log-magnitude spectrogram with
    /// its per-frame mask (1 = masked).
    pub fn forward_spectrogram(&self, masked: &Spectrogram, frame_mask: &[f64]) -> Result<Spectrogram> {
        self.expect_domain(Domain::Spectrogram)?;
        masked.expect_kind(SpectrogramKind::LogMagnitude)?;
        let input = spectrogram_input(masked.real_bins()?, masked.freq_bins(), masked.frames(), frame_mask)?;
        let out = self.infer(input)?;
        masked.with_real(SpectrogramKind::LogMagnitude, out.into_data())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::save_params(path, &self.params)
    }

    pub fn load(config: ModelConfig, path: &Path) -> Result<Self> {
        Self::from_parts(config, checkpoint::load_params(path)?)
    }
}

fn check_binary(mask: &[f64]) -> Result<()> {
    if mask.iter().any(|m| *m != 0.0 && *m != 1.0) {
        return Err(Error::Mask("mask must contain only 0 and 1".into()));
    }
    Ok(())
}

/// `[1, 2, L]` input: the masked signal and the mask channel.
pub fn waveform_input(samples: &[f64], mask: &[f64]) -> Result<Tensor> {
    if samples.len() != mask.len() {
        return Err(Error::Shape(format!("{} samples but {} mask values", samples.len(), mask.len())));
    }
    check_binary(mask)?;
    let mut data = Vec::with_capacity(2 * samples.len());
    data.extend(samples.iter().zip(mask).map(|(s, m)| s * (1.0 - m)));
    data.extend_from_slice(mask);
    Tensor::new(vec![1, 2, samples.len()], data)
}

/// `[1, 2, F, T]` input: the masked frequency-major log-magnitude and the
/// frame mask broadcast over frequency.
pub fn spectrogram_input(bins: &[f64], freq_bins: usize, frames: usize, frame_mask: &[f64]) -> Result<Tensor> {
    if bins.len() != freq_bins * frames || frame_mask.len() != frames {
        return Err(Error::Shape(format!(
            "{} bins and {} mask values for a {freq_bins}x{frames} grid",
            bins.len(),
            frame_mask.len()
        )));
    }
    check_binary(frame_mask)?;
    let mut data = Vec::with_capacity(2 * bins.len());
    for k in 0..freq_bins {
        for t in 0..frames {
            data.push(bins[k * frames + t] * (1.0 - frame_mask[t]));
        }
    }
    for _ in 0..freq_bins {
        data.extend_from_slice(frame_mask);
    }
    Tensor::new(vec![1, 2, freq_bins, frames], data)
}
