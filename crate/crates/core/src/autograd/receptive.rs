//! Analytic receptive field of a layer stack and an empirical
//! gradient-support measurement to check it against.

use super::graph::Graph;
use super::layers::{bind_params, forward_layers, LayerKind, LayerParams, LayerSpec};
use super::tensor::Tensor;
use crate::error::{Error, Result};

fn gcd(a: u128, b: u128) -> u128 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Positive rational with reduced numerator / denominator.
#[derive(Clone, Copy, Debug)]
struct Ratio(u128, u128);

impl Ratio {
    fn reduce(self) -> Self {
        let g = gcd(self.0, self.1).max(1);
        Ratio(self.0 / g, self.1 / g)
    }
    fn mul(self, n: u128, d: u128) -> Self {
        Ratio(self.0 * n, self.1 * d).reduce()
    }
    fn add(self, o: Ratio) -> Self {
        Ratio(self.0 * o.1 + o.0 * self.1, self.1 * o.1).reduce()
    }
}

/// Receptive field per spatial axis `[height, width]` (1-D stacks report
/// height 1). Upsampling by `u` scales the running stride product by `1/u`;
/// a fractional total is rounded up.
pub fn receptive_field_axes(layers: &[LayerSpec]) -> Result<[usize; 2]> {
    let mut out = [0usize; 2];
    for (axis, slot) in out.iter_mut().enumerate() {
        let mut jump = Ratio(1, 1);
        let mut total = Ratio(1, 1);
        for layer in layers {
            match layer.kind {
                k if k.is_conv() => {
                    let g = layer.geom()?;
                    let extent = ((g.kernel[axis] - 1) * g.dilation[axis]) as u128;
                    total = total.add(jump.mul(extent, 1));
                    jump = jump.mul(g.stride[axis] as u128, 1);
                }
                LayerKind::UpsampleNearest => {
                    jump = jump.mul(1, layer.factors()?[axis] as u128);
                }
                // The skip path only sees the layers after it, so the main
                // path bounds the field.
                LayerKind::Activation | LayerKind::SkipInput => {}
                other => {
                    return Err(Error::UnsupportedLayer {
                        op: "receptive_field",
                        kind: other.name().to_string(),
                    })
                }
            }
        }
        *slot = total.0.div_ceil(total.1) as usize;
    }
    Ok(out)
}

/// Receptive field along the time axis (the last spatial axis).
pub fn receptive_field(layers: &[LayerSpec]) -> Result<usize> {
    Ok(receptive_field_axes(layers)?[1])
}

/// Backpropagate a unit impulse at the centre output position (channel 0)
/// and report the extent `[height, width]` of nonzero input gradient.
/// `input_shape` is `[C, L]` for 1-D stacks or `[C, H, W]` for 2-D stacks.
pub fn gradient_support(layers: &[LayerSpec], params: &[LayerParams], input_shape: &[usize]) -> Result<[usize; 2]> {
    let mut shape = vec![1];
    shape.extend_from_slice(input_shape);
    let mut g = Graph::new();
    let x = g.param(Tensor::filled(&shape, 0.5));
    let vars = bind_params(&mut g, params, false);
    let (y, _) = forward_layers(&mut g, layers, &vars, x, None)?;
    let yshape = g.value(y).shape().to_vec();
    let (oh, ow) = match yshape.len() {
        3 => (1, yshape[2]),
        4 => (yshape[2], yshape[3]),
        _ => return Err(Error::Shape(format!("unexpected output shape {yshape:?}"))),
    };
    let mut pick = Tensor::zeros(&yshape);
    pick.data_mut()[(oh / 2) * ow + ow / 2] = 1.0;
    let pick = g.constant(pick);
    let sel = g.mul(y, pick)?;
    let loss = g.sum(sel);
    let grads = g.backward(loss)?;
    let gx = grads.get(x).ok_or_else(|| Error::Numeric("input has no gradient".into()))?;
    let (c, h, w) = match input_shape.len() {
        2 => (input_shape[0], 1, input_shape[1]),
        3 => (input_shape[0], input_shape[1], input_shape[2]),
        _ => return Err(Error::Shape(format!("bad input shape {input_shape:?}"))),
    };
    let mut rows = vec![false; h];
    let mut cols = vec![false; w];
    for ci in 0..c {
        for i in 0..h {
            for j in 0..w {
                if gx[(ci * h + i) * w + j] != 0.0 {
                    rows[i] = true;
                    cols[j] = true;
                }
            }
        }
    }
    let extent = |v: &[bool]| match (v.iter().position(|b| *b), v.iter().rposition(|b| *b)) {
        (Some(a), Some(b)) => b - a + 1,
        _ => 0,
    };
    Ok([extent(&rows), extent(&cols)])
}
