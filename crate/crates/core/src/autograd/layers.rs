//! Layer descriptions, parameter initialization and the layer forward pass.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::conv::ConvGeom;
use super::graph::{Graph, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Identity,
    LeakyRelu {
        slope: f64,
    },
    Sigmoid,
    Tanh,
    Relu,
    /// `ln(1 + e^x)`: nonnegative like `Relu`, but never without gradient.
    Softplus,
}

impl Activation {
    pub fn leaky() -> Self {
        Activation::LeakyRelu { slope: LEAKY_SLOPE }
    }

    /// Weight gain that keeps the mean square of activations steady
    /// through a layer followed by this nonlinearity.
    pub fn init_gain(self) -> f64 {
        match self {
            Activation::LeakyRelu { slope } => (2.0 / (1.0 + slope * slope)).sqrt(),
            Activation::Relu => 2f64.sqrt(),
            Activation::Identity | Activation::Sigmoid | Activation::Tanh | Activation::Softplus => 1.0,
        }
    }

    pub fn apply(self, graph: &mut Graph, x: Var) -> Var {
        match self {
            Activation::Identity => x,
            Activation::LeakyRelu { slope } => graph.leaky_relu(x, slope),
            Activation::Sigmoid => graph.sigmoid(x),
            Activation::Tanh => graph.tanh(x),
            Activation::Relu => graph.relu(x),
            Activation::Softplus => graph.softplus(x),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv1d,
    Conv2d,
    GatedConv1d,
    GatedConv2d,
    UpsampleNearest,
    /// Crop to the network input's extent and append the input's channels.
    SkipInput,
    Activation,
    GlobalAvgPool,
    Dense,
}

impl LayerKind {
    pub fn name(self) -> &'static str {
        match self {
            LayerKind::Conv1d => "conv1d",
            LayerKind::Conv2d => "conv2d",
            LayerKind::GatedConv1d => "gated_conv1d",
            LayerKind::GatedConv2d => "gated_conv2d",
            LayerKind::UpsampleNearest => "upsample_nearest",
            LayerKind::SkipInput => "skip_input",
            LayerKind::Activation => "activation",
            LayerKind::GlobalAvgPool => "global_avg_pool",
            LayerKind::Dense => "dense",
        }
    }

    pub fn is_conv(self) -> bool {
        matches!(
            self,
            LayerKind::Conv1d | LayerKind::Conv2d | LayerKind::GatedConv1d | LayerKind::GatedConv2d
        )
    }

    pub fn is_gated(self) -> bool {
        matches!(self, LayerKind::GatedConv1d | LayerKind::GatedConv2d)
    }

    fn spatial_dims(self) -> Option<usize> {
        match self {
            LayerKind::Conv1d | LayerKind::GatedConv1d => Some(1),
            LayerKind::Conv2d | LayerKind::GatedConv2d => Some(2),
            _ => None,
        }
    }
}

/// One layer. Spatial vectors (`kernel`, `stride`, `dilation`, `factor`) have
/// one entry for 1-D layers and `[frequency, time]` entries for 2-D layers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    #[serde(default)]
    pub in_channels: usize,
    #[serde(default)]
    pub out_channels: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub kernel: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stride: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dilation: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub factor: Vec<usize>,
    /// Post-activation for plain convs; the feature-branch activation for
    /// gated convs.
    #[serde(default)]
    pub activation: Activation,
}

impl LayerSpec {
    fn conv_like(kind: LayerKind, cin: usize, cout: usize, kernel: Vec<usize>, stride: Vec<usize>, dilation: Vec<usize>, activation: Activation) -> Self {
        Self {
            kind,
            in_channels: cin,
            out_channels: cout,
            kernel,
            stride,
            dilation,
            factor: Vec::new(),
            activation,
        }
    }

    pub fn conv1d(cin: usize, cout: usize, kernel: usize, stride: usize, dilation: usize, activation: Activation) -> Self {
        Self::conv_like(LayerKind::Conv1d, cin, cout, vec![kernel], vec![stride], vec![dilation], activation)
    }

    pub fn gated_conv1d(cin: usize, cout: usize, kernel: usize, stride: usize, dilation: usize) -> Self {
        Self::conv_like(LayerKind::GatedConv1d, cin, cout, vec![kernel], vec![stride], vec![dilation], Activation::leaky())
    }

    pub fn conv2d(cin: usize, cout: usize, kernel: [usize; 2], stride: [usize; 2], dilation: [usize; 2], activation: Activation) -> Self {
        Self::conv_like(LayerKind::Conv2d, cin, cout, kernel.to_vec(), stride.to_vec(), dilation.to_vec(), activation)
    }

    pub fn gated_conv2d(cin: usize, cout: usize, kernel: [usize; 2], stride: [usize; 2], dilation: [usize; 2]) -> Self {
        Self::conv_like(LayerKind::GatedConv2d, cin, cout, kernel.to_vec(), stride.to_vec(), dilation.to_vec(), Activation::leaky())
    }

    pub fn upsample(factor: Vec<usize>) -> Self {
        Self {
            kind: LayerKind::UpsampleNearest,
            in_channels: 0,
            out_channels: 0,
            kernel: Vec::new(),
            stride: Vec::new(),
            dilation: Vec::new(),
            factor,
            activation: Activation::Identity,
        }
    }

    pub fn activation(activation: Activation) -> Self {
        Self {
            activation,
            ..Self::upsample(Vec::new())
        }
        .with_kind(LayerKind::Activation)
    }

    pub fn skip_input() -> Self {
        Self::upsample(Vec::new()).with_kind(LayerKind::SkipInput)
    }

    pub fn global_avg_pool() -> Self {
        Self::upsample(Vec::new()).with_kind(LayerKind::GlobalAvgPool)
    }

    pub fn dense(cin: usize, cout: usize) -> Self {
        Self {
            in_channels: cin,
            out_channels: cout,
            ..Self::upsample(Vec::new()).with_kind(LayerKind::Dense)
        }
    }

    fn with_kind(mut self, kind: LayerKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    /// Geometry as `[height, width]`; 1-D layers get a unit height axis.
    pub fn geom(&self) -> Result<ConvGeom> {
        let pick = |v: &[usize]| -> Result<[usize; 2]> {
            match *v {
                [t] => Ok([1, t]),
                [f, t] => Ok([f, t]),
                _ => Err(Error::InvalidParams(format!("bad spatial vector {v:?}"))),
            }
        };
        let geom = ConvGeom {
            kernel: pick(&self.kernel)?,
            stride: pick(&self.stride)?,
            dilation: pick(&self.dilation)?,
        };
        geom.validate()?;
        Ok(geom)
    }

    /// Upsampling factors as `[height, width]`.
    pub fn factors(&self) -> Result<[usize; 2]> {
        let f = match *self.factor.as_slice() {
            [t] => [1, t],
            [f, t] => [f, t],
            _ => return Err(Error::InvalidParams(format!("bad upsample factor {:?}", self.factor))),
        };
        if f.contains(&0) {
            return Err(Error::InvalidParams("upsample factor must be >= 1".into()));
        }
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(dims) = self.kind.spatial_dims() {
            for (name, v) in [("kernel", &self.kernel), ("stride", &self.stride), ("dilation", &self.dilation)] {
                if v.len() != dims {
                    return Err(Error::InvalidParams(format!(
                        "{} layer needs {dims} {name} entries, got {v:?}",
                        self.kind.name()
                    )));
                }
            }
            if self.in_channels == 0 || self.out_channels == 0 {
                return Err(Error::InvalidParams(format!("{} layer needs nonzero channels", self.kind.name())));
            }
            self.geom()?;
        }
        match self.kind {
            LayerKind::UpsampleNearest => {
                self.factors()?;
            }
            LayerKind::Dense if self.in_channels == 0 || self.out_channels == 0 => {
                return Err(Error::InvalidParams("dense layer needs nonzero sizes".into()));
            }
            _ => {}
        }
        Ok(())
    }

    /// Shapes of the parameter tensors this layer owns. Gated layers own a
    /// gating bank and a feature bank: `[W_g, b_g, W_f, b_f]`.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        let mut w = vec![self.out_channels, self.in_channels];
        w.extend(&self.kernel);
        let b = vec![self.out_channels];
        match self.kind {
            LayerKind::Conv1d | LayerKind::Conv2d => vec![w, b],
            LayerKind::GatedConv1d | LayerKind::GatedConv2d => vec![w.clone(), b.clone(), w, b],
            LayerKind::Dense => vec![vec![self.out_channels, self.in_channels], b],
            _ => Vec::new(),
        }
    }

    fn fan_in(&self) -> usize {
        self.in_channels * self.kernel.iter().product::<usize>().max(1)
    }

    /// He-uniform weights (`±gain * sqrt(3 / fan_in)`), biases zero.
    ///
    /// In a gated layer the gate bank gets unit gain and the feature bank
    /// twice its activation's gain: a gate near `sigmoid(0) = 1/2` passes a
    /// quarter of the power, and without the extra factor deep gated stacks
    /// start out with a vanishing signal.
    pub fn init_params<R: Rng>(&self, rng: &mut R) -> LayerParams {
        let unit = (3.0 / self.fan_in().max(1) as f64).sqrt();
        let gain = self.activation.init_gain();
        let gains: Vec<f64> = match self.kind {
            LayerKind::GatedConv1d | LayerKind::GatedConv2d => vec![1.0, 0.0, 2.0 * gain, 0.0],
            _ => vec![gain, 0.0],
        };
        let tensors = self
            .param_shapes()
            .into_iter()
            .zip(gains)
            .map(|(shape, g)| {
                let mut t = Tensor::zeros(&shape);
                let bound = g * unit;
                if bound > 0.0 {
                    t.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-bound..=bound));
                }
                t
            })
            .collect();
        LayerParams { tensors }
    }

    /// Apply this layer to `x`, with `params` the graph leaves for
    /// [`LayerSpec::param_shapes`].
    pub fn apply(&self, graph: &mut Graph, params: &[Var], x: Var) -> Result<Var> {
        match self.kind {
            LayerKind::Conv1d | LayerKind::Conv2d => {
                let y = graph.conv(x, params[0], Some(params[1]), self.geom()?)?;
                Ok(self.activation.apply(graph, y))
            }
            LayerKind::GatedConv1d | LayerKind::GatedConv2d => gated_conv(graph, x, params, self.geom()?, self.activation),
            LayerKind::UpsampleNearest => graph.upsample(x, self.factors()?),
            LayerKind::Activation => Ok(self.activation.apply(graph, x)),
            LayerKind::GlobalAvgPool => graph.global_avg_pool(x),
            LayerKind::Dense => graph.dense(x, params[0], params[1]),
            LayerKind::SkipInput => Err(Error::UnsupportedLayer {
                op: "apply",
                kind: "skip_input needs the network input; run it through forward_layers".into(),
            }),
        }
    }
}

/// `sigmoid(W_g * x + b_g) ⊙ φ(W_f * x + b_f)`.
pub fn gated_conv(graph: &mut Graph, x: Var, params: &[Var], geom: ConvGeom, feature_act: Activation) -> Result<Var> {
    let gate = graph.conv(x, params[0], Some(params[1]), geom)?;
    let gate = graph.sigmoid(gate);
    let feat = graph.conv(x, params[2], Some(params[3]), geom)?;
    let feat = feature_act.apply(graph, feat);
    graph.mul(gate, feat)
}

/// Trainable tensors of one layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    pub tensors: Vec<Tensor>,
}

/// Validate that `params` fit `layers` exactly.
pub fn check_params(layers: &[LayerSpec], params: &[LayerParams]) -> Result<()> {
    if layers.len() != params.len() {
        return Err(Error::Shape(format!("{} layers but {} parameter groups", layers.len(), params.len())));
    }
    for (i, (spec, p)) in layers.iter().zip(params).enumerate() {
        let shapes = spec.param_shapes();
        let found: Vec<&[usize]> = p.tensors.iter().map(Tensor::shape).collect();
        if shapes.len() != found.len() || shapes.iter().zip(&found).any(|(a, b)| a.as_slice() != *b) {
            return Err(Error::Shape(format!("layer {i}: expected parameter shapes {shapes:?}, found {found:?}")));
        }
    }
    Ok(())
}

/// Graph leaves for a full parameter set.
pub fn bind_params(graph: &mut Graph, params: &[LayerParams], trainable: bool) -> Vec<Vec<Var>> {
    params
        .iter()
        .map(|p| {
            p.tensors
                .iter()
                .map(|t| if trainable { graph.param(t.clone()) } else { graph.constant(t.clone()) })
                .collect()
        })
        .collect()
}

/// Run `layers` in sequence. Returns the output and, when `tap` is given, the
/// activation right after layer `tap`.
pub fn forward_layers(graph: &mut Graph, layers: &[LayerSpec], vars: &[Vec<Var>], x: Var, tap: Option<usize>) -> Result<(Var, Option<Var>)> {
    let mut h = x;
    let mut tapped = None;
    for (i, (spec, p)) in layers.iter().zip(vars).enumerate() {
        h = if spec.kind == LayerKind::SkipInput {
            let extent = graph.value(x).shape()[2..].to_vec();
            let cropped = graph.crop(h, &extent)?;
            graph.concat_channels(cropped, x)?
        } else {
            spec.apply(graph, p, h)?
        };
        if tap == Some(i) {
            tapped = Some(h);
        }
    }
    Ok((h, tapped))
}
