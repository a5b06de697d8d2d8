//! Tape of tensor operations with reverse-mode differentiation.
//!
//! Nodes are appended in evaluation order, so a reverse sweep over the node
//! list visits every node after all of its consumers. Gradients accumulate in
//! that fixed order, which makes them bit-reproducible.

use super::conv::{self, ConvDims, ConvGeom};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Conv {
        input: Var,
        weight: Var,
        bias: Option<Var>,
        geom: ConvGeom,
    },
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    LeakyRelu(Var, f64),
    Relu(Var),
    Softplus(Var),
    Upsample {
        input: Var,
        factor: [usize; 2],
    },
    Crop(Var),
    Concat(Var, Var),
    GlobalAvgPool(Var),
    Dense {
        input: Var,
        weight: Var,
        bias: Var,
    },
    Sum(Var),
    MaskedL1 {
        output: Var,
        target: Vec<f64>,
        mask: Vec<f64>,
        count: usize,
    },
    MeanAbsDiff(Var, Var),
    CrossEntropy {
        logits: Var,
        probs: Vec<f64>,
        labels: Vec<usize>,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to every node that requires them.
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn take(&mut self, v: Var) -> Option<Vec<f64>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

/// Split a rank-3 `[N, C, L]` or rank-4 `[N, C, H, W]` shape into
/// `(n, c, h, w)`.
pub(crate) fn nchw(shape: &[usize]) -> Result<(usize, usize, usize, usize)> {
    match *shape {
        [n, c, l] => Ok((n, c, 1, l)),
        [n, c, h, w] => Ok((n, c, h, w)),
        _ => Err(Error::Shape(format!("expected [N, C, L] or [N, C, H, W], got {shape:?}"))),
    }
}

fn spatial_shape(like: &[usize], n: usize, c: usize, h: usize, w: usize) -> Vec<usize> {
    if like.len() == 3 {
        vec![n, c, w]
    } else {
        vec![n, c, h, w]
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `sign(d)` with the subgradient 0 at an exact tie.
fn l1_slope(d: f64) -> f64 {
    if d > 0.0 {
        1.0
    } else if d < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn data(&self, v: Var) -> &[f64] {
        self.nodes[v.0].value.data()
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// A value that is not differentiated.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.leaf(t, false)
    }

    /// A tracked leaf (weights, or inputs under a gradient check).
    pub fn param(&mut self, t: Tensor) -> Var {
        self.leaf(t, true)
    }

    fn same_shape(&self, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Shape(format!("{:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        Ok(())
    }

    fn unary(&mut self, x: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let out: Vec<f64> = self.data(x).iter().map(|v| f(*v)).collect();
        let value = Tensor::new(self.shape(x).to_vec(), out).expect("elementwise map keeps shape");
        self.push(value, op, &[x])
    }

    /// Cross-correlation of `[N, C, L]` / `[N, C, H, W]` input with
    /// `[O, C, K]` / `[O, C, KH, KW]` weights.
    pub fn conv(&mut self, input: Var, weight: Var, bias: Option<Var>, geom: ConvGeom) -> Result<Var> {
        let (n, c, h, w) = nchw(self.shape(input))?;
        let ws = self.shape(weight).to_vec();
        let (o, wc, kh, kw) = match (self.shape(input).len(), ws.as_slice()) {
            (3, [o, wc, k]) => (*o, *wc, 1, *k),
            (4, [o, wc, kh, kw]) => (*o, *wc, *kh, *kw),
            _ => {
                return Err(Error::Shape(format!(
                    "weight {ws:?} does not match input rank {}",
                    self.shape(input).len()
                )))
            }
        };
        if wc != c {
            return Err(Error::Shape(format!("input has {c} channels, weight expects {wc}")));
        }
        if [kh, kw] != geom.kernel {
            return Err(Error::Shape(format!("weight kernel {:?} != geometry {:?}", [kh, kw], geom.kernel)));
        }
        if let Some(b) = bias {
            if self.shape(b) != [o] {
                return Err(Error::Shape(format!("bias {:?} for {o} output channels", self.shape(b))));
            }
        }
        let dims = ConvDims::resolve(&geom, n, c, h, w, o)?;
        let out = conv::forward(
            self.data(input),
            self.data(weight),
            bias.map(|b| self.data(b)),
            &dims,
            &geom,
        );
        let shape = spatial_shape(self.shape(input), n, o, dims.oh, dims.ow);
        let value = Tensor::new(shape, out)?;
        let mut inputs = vec![input, weight];
        inputs.extend(bias);
        Ok(self.push(
            value,
            Op::Conv {
                input,
                weight,
                bias,
                geom,
            },
            &inputs,
        ))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b)?;
        let out = self.data(a).iter().zip(self.data(b)).map(|(x, y)| x + y).collect();
        let value = Tensor::new(self.shape(a).to_vec(), out)?;
        Ok(self.push(value, Op::Add(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b)?;
        let out = self.data(a).iter().zip(self.data(b)).map(|(x, y)| x * y).collect();
        let value = Tensor::new(self.shape(a).to_vec(), out)?;
        Ok(self.push(value, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        self.unary(x, Op::Scale(x, factor), |v| v * factor)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, Op::Sigmoid(x), sigmoid)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, Op::Tanh(x), f64::tanh)
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        self.unary(x, Op::LeakyRelu(x, slope), |v| if v > 0.0 { v } else { slope * v })
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, Op::Relu(x), |v| v.max(0.0))
    }

    /// `ln(1 + e^x)`.
    pub fn softplus(&mut self, x: Var) -> Var {
        self.unary(x, Op::Softplus(x), softplus)
    }

    /// Nearest-neighbour upsampling of the spatial axes by `[fh, fw]`.
    pub fn upsample(&mut self, x: Var, factor: [usize; 2]) -> Result<Var> {
        if factor.contains(&0) {
            return Err(Error::InvalidParams("upsample factor must be >= 1".into()));
        }
        let shape = self.shape(x).to_vec();
        let (n, c, h, w) = nchw(&shape)?;
        if shape.len() == 3 && factor[0] != 1 {
            return Err(Error::InvalidParams("1-D input can only be upsampled along time".into()));
        }
        let (oh, ow) = (h * factor[0], w * factor[1]);
        let src = self.data(x);
        let mut out = vec![0.0; n * c * oh * ow];
        for plane in 0..n * c {
            for i in 0..oh {
                let row = &src[(plane * h + i / factor[0]) * w..][..w];
                let dst = &mut out[(plane * oh + i) * ow..][..ow];
                for (j, v) in dst.iter_mut().enumerate() {
                    *v = row[j / factor[1]];
                }
            }
        }
        let value = Tensor::new(spatial_shape(&shape, n, c, oh, ow), out)?;
        Ok(self.push(value, Op::Upsample { input: x, factor }, &[x]))
    }

    /// Keep the leading `extent` positions of each spatial axis.
    pub fn crop(&mut self, x: Var, extent: &[usize]) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let (n, c, h, w) = nchw(&shape)?;
        let (th, tw) = match *extent {
            [l] if shape.len() == 3 => (1, l),
            [eh, ew] if shape.len() == 4 => (eh, ew),
            _ => return Err(Error::Shape(format!("crop extent {extent:?} for shape {shape:?}"))),
        };
        if th > h || tw > w {
            return Err(Error::Shape(format!("cannot crop {shape:?} up to {extent:?}")));
        }
        if (th, tw) == (h, w) {
            return Ok(x);
        }
        let src = self.data(x);
        let mut out = Vec::with_capacity(n * c * th * tw);
        for plane in 0..n * c {
            for i in 0..th {
                out.extend_from_slice(&src[(plane * h + i) * w..][..tw]);
            }
        }
        let value = Tensor::new(spatial_shape(&shape, n, c, th, tw), out)?;
        Ok(self.push(value, Op::Crop(x), &[x]))
    }

    /// Stack `a` and `b` along the channel axis; spatial extents must match.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let (n, ca, h, w) = nchw(&sa)?;
        let (nb, cb, hb, wb) = nchw(&sb)?;
        if sa.len() != sb.len() || (n, h, w) != (nb, hb, wb) {
            return Err(Error::Shape(format!("cannot concatenate {sa:?} and {sb:?} along channels")));
        }
        let plane = h * w;
        let (da, db) = (self.data(a), self.data(b));
        let mut out = Vec::with_capacity(n * (ca + cb) * plane);
        for i in 0..n {
            out.extend_from_slice(&da[i * ca * plane..(i + 1) * ca * plane]);
            out.extend_from_slice(&db[i * cb * plane..(i + 1) * cb * plane]);
        }
        let value = Tensor::new(spatial_shape(&sa, n, ca + cb, h, w), out)?;
        Ok(self.push(value, Op::Concat(a, b), &[a, b]))
    }

    /// Mean over all spatial positions: `[N, C, ...] -> [N, C]`.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let (n, c, h, w) = nchw(self.shape(x))?;
        let area = (h * w) as f64;
        let out = self
            .data(x)
            .chunks(h * w)
            .map(|plane| plane.iter().sum::<f64>() / area)
            .collect();
        let value = Tensor::new(vec![n, c], out)?;
        Ok(self.push(value, Op::GlobalAvgPool(x), &[x]))
    }

    /// `[N, F] -> [N, O]` with weight `[O, F]` and bias `[O]`.
    pub fn dense(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let (n, f) = match *self.shape(input) {
            [n, f] => (n, f),
            ref s => return Err(Error::Shape(format!("dense input must be [N, F], got {s:?}"))),
        };
        let (o, wf) = match *self.shape(weight) {
            [o, wf] => (o, wf),
            ref s => return Err(Error::Shape(format!("dense weight must be [O, F], got {s:?}"))),
        };
        if wf != f || self.shape(bias) != [o] {
            return Err(Error::Shape(format!("dense weight [{o}, {wf}] for {f} features")));
        }
        let (x, wt, b) = (self.data(input), self.data(weight), self.data(bias));
        let mut out = vec![0.0; n * o];
        for i in 0..n {
            for j in 0..o {
                out[i * o + j] = b[j] + (0..f).map(|k| x[i * f + k] * wt[j * f + k]).sum::<f64>();
            }
        }
        let value = Tensor::new(vec![n, o], out)?;
        Ok(self.push(value, Op::Dense { input, weight, bias }, &[input, weight, bias]))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.data(x).iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).numel() as f64;
        let s = self.sum(x);
        self.scale(s, 1.0 / n)
    }

    /// Mean of `|output - target|` over positions where `mask` is 1. An empty
    /// mask yields 0.
    pub fn masked_l1(&mut self, output: Var, target: &[f64], mask: &[f64]) -> Result<Var> {
        let n = self.value(output).numel();
        if target.len() != n || mask.len() != n {
            return Err(Error::Shape(format!(
                "output has {n} values, target {} and mask {}",
                target.len(),
                mask.len()
            )));
        }
        if mask.iter().any(|m| *m != 0.0 && *m != 1.0) {
            return Err(Error::Mask("mask must be binary".into()));
        }
        let count = mask.iter().filter(|m| **m == 1.0).count();
        let total: f64 = self
            .data(output)
            .iter()
            .zip(target)
            .zip(mask)
            .filter(|(_, m)| **m == 1.0)
            .map(|((o, t), _)| (o - t).abs())
            .sum();
        let value = if count == 0 { 0.0 } else { total / count as f64 };
        Ok(self.push(
            Tensor::scalar(value),
            Op::MaskedL1 {
                output,
                target: target.to_vec(),
                mask: mask.to_vec(),
                count,
            },
            &[output],
        ))
    }

    /// `sum |a - b| / numel`.
    pub fn mean_abs_diff(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b)?;
        let n = self.value(a).numel() as f64;
        let s: f64 = self.data(a).iter().zip(self.data(b)).map(|(x, y)| (x - y).abs()).sum();
        Ok(self.push(Tensor::scalar(s / n), Op::MeanAbsDiff(a, b), &[a, b]))
    }

    /// Mean softmax cross-entropy of `[N, K]` logits against class labels.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let (n, k) = match *self.shape(logits) {
            [n, k] => (n, k),
            ref s => return Err(Error::Shape(format!("logits must be [N, K], got {s:?}"))),
        };
        if labels.len() != n || labels.iter().any(|l| *l >= k) {
            return Err(Error::Shape(format!("{} labels for {n} rows of {k} classes", labels.len())));
        }
        let z = self.data(logits);
        let mut probs = vec![0.0; n * k];
        let mut loss = 0.0;
        for i in 0..n {
            let row = &z[i * k..(i + 1) * k];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let denom: f64 = row.iter().map(|v| (v - max).exp()).sum();
            for j in 0..k {
                probs[i * k + j] = (row[j] - max).exp() / denom;
            }
            loss += denom.ln() + max - row[labels[i]];
        }
        Ok(self.push(
            Tensor::scalar(loss / n as f64),
            Op::CrossEntropy {
                logits,
                probs,
                labels: labels.to_vec(),
            },
            &[logits],
        ))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).numel() != 1 {
            return Err(Error::Shape(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        if !self.requires_grad(loss) {
            return Ok(Gradients { grads });
        }
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else {
                continue;
            };
            self.backprop_node(i, &g, &mut grads)?;
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], v: Var, contribution: impl FnOnce() -> Vec<f64>) {
        assert!(v.0 < grads.len(), "graph edge points forward");
        if !self.nodes[v.0].requires_grad {
            return;
        }
        let c = contribution();
        match &mut grads[v.0] {
            Some(acc) => acc.iter_mut().zip(&c).for_each(|(a, b)| *a += b),
            slot @ None => *slot = Some(c),
        }
    }

    fn backprop_node(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) -> Result<()> {
        let node = &self.nodes[i];
        let y = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::Conv {
                input,
                weight,
                bias,
                geom,
            } => {
                let (n, c, h, w) = nchw(self.shape(*input))?;
                let o = self.shape(*weight)[0];
                let dims = ConvDims::resolve(geom, n, c, h, w, o)?;
                let need = (
                    self.requires_grad(*input),
                    self.requires_grad(*weight),
                    bias.is_some_and(|b| self.requires_grad(b)),
                );
                let cg = conv::backward(self.data(*input), self.data(*weight), g, &dims, geom, need);
                if let Some(dx) = cg.input {
                    self.accumulate(grads, *input, || dx);
                }
                if let Some(dw) = cg.weight {
                    self.accumulate(grads, *weight, || dw);
                }
                if let (Some(b), Some(db)) = (bias, cg.bias) {
                    self.accumulate(grads, *b, || db);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, || g.to_vec());
                self.accumulate(grads, *b, || g.to_vec());
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.data(*a), self.data(*b));
                self.accumulate(grads, *a, || g.iter().zip(bv).map(|(g, b)| g * b).collect());
                self.accumulate(grads, *b, || g.iter().zip(av).map(|(g, a)| g * a).collect());
            }
            Op::Scale(x, f) => self.accumulate(grads, *x, || g.iter().map(|v| v * f).collect()),
            Op::Sigmoid(x) => self.accumulate(grads, *x, || g.iter().zip(y).map(|(g, s)| g * s * (1.0 - s)).collect()),
            Op::Tanh(x) => self.accumulate(grads, *x, || g.iter().zip(y).map(|(g, t)| g * (1.0 - t * t)).collect()),
            Op::LeakyRelu(x, slope) => {
                let xv = self.data(*x);
                self.accumulate(grads, *x, || {
                    g.iter().zip(xv).map(|(g, v)| if *v > 0.0 { *g } else { g * slope }).collect()
                })
            }
            Op::Relu(x) => {
                let xv = self.data(*x);
                self.accumulate(grads, *x, || g.iter().zip(xv).map(|(g, v)| if *v > 0.0 { *g } else { 0.0 }).collect())
            }
            // d/dx softplus(x) = sigmoid(x) = 1 - e^-y
            Op::Softplus(x) => self.accumulate(grads, *x, || g.iter().zip(y).map(|(g, y)| -g * (-y).exp_m1()).collect()),
            Op::Upsample { input, factor } => {
                let shape = self.shape(*input);
                let (n, c, h, w) = nchw(shape)?;
                let (oh, ow) = (h * factor[0], w * factor[1]);
                self.accumulate(grads, *input, || {
                    let mut dx = vec![0.0; n * c * h * w];
                    for plane in 0..n * c {
                        for i in 0..oh {
                            let src = &g[(plane * oh + i) * ow..][..ow];
                            let dst = &mut dx[(plane * h + i / factor[0]) * w..][..w];
                            for (j, v) in src.iter().enumerate() {
                                dst[j / factor[1]] += v;
                            }
                        }
                    }
                    dx
                });
            }
            Op::Crop(x) => {
                let (n, c, h, w) = nchw(self.shape(*x))?;
                let (_, _, th, tw) = nchw(node.value.shape())?;
                self.accumulate(grads, *x, || {
                    let mut dx = vec![0.0; n * c * h * w];
                    for plane in 0..n * c {
                        for i in 0..th {
                            dx[(plane * h + i) * w..][..tw].copy_from_slice(&g[(plane * th + i) * tw..][..tw]);
                        }
                    }
                    dx
                });
            }
            Op::Concat(a, b) => {
                let (n, ca, h, w) = nchw(self.shape(*a))?;
                let cb = self.shape(*b)[1];
                let (pa, pb) = (ca * h * w, cb * h * w);
                self.accumulate(grads, *a, || (0..n).flat_map(|i| g[i * (pa + pb)..][..pa].iter().copied()).collect());
                self.accumulate(grads, *b, || (0..n).flat_map(|i| g[i * (pa + pb) + pa..][..pb].iter().copied()).collect());
            }
            Op::GlobalAvgPool(x) => {
                let (_, _, h, w) = nchw(self.shape(*x))?;
                let area = h * w;
                self.accumulate(grads, *x, || g.iter().flat_map(|v| std::iter::repeat_n(v / area as f64, area)).collect());
            }
            Op::Dense { input, weight, bias } => {
                let (n, f) = (self.shape(*input)[0], self.shape(*input)[1]);
                let o = self.shape(*weight)[0];
                let (x, wt) = (self.data(*input), self.data(*weight));
                self.accumulate(grads, *input, || {
                    let mut dx = vec![0.0; n * f];
                    for i in 0..n {
                        for j in 0..o {
                            for k in 0..f {
                                dx[i * f + k] += g[i * o + j] * wt[j * f + k];
                            }
                        }
                    }
                    dx
                });
                self.accumulate(grads, *weight, || {
                    let mut dw = vec![0.0; o * f];
                    for i in 0..n {
                        for j in 0..o {
                            for k in 0..f {
                                dw[j * f + k] += g[i * o + j] * x[i * f + k];
                            }
                        }
                    }
                    dw
                });
                self.accumulate(grads, *bias, || {
                    let mut db = vec![0.0; o];
                    for i in 0..n {
                        for j in 0..o {
                            db[j] += g[i * o + j];
                        }
                    }
                    db
                });
            }
            Op::Sum(x) => {
                let n = self.value(*x).numel();
                self.accumulate(grads, *x, || vec![g[0]; n]);
            }
            Op::MaskedL1 {
                output,
                target,
                mask,
                count,
            } => {
                let o = self.data(*output);
                self.accumulate(grads, *output, || {
                    if *count == 0 {
                        return vec![0.0; o.len()];
                    }
                    let s = g[0] / *count as f64;
                    o.iter()
                        .zip(target)
                        .zip(mask)
                        .map(|((o, t), m)| if *m == 1.0 { s * l1_slope(o - t) } else { 0.0 })
                        .collect()
                });
            }
            Op::MeanAbsDiff(a, b) => {
                let (av, bv) = (self.data(*a), self.data(*b));
                let s = g[0] / av.len() as f64;
                self.accumulate(grads, *a, || av.iter().zip(bv).map(|(x, y)| s * l1_slope(x - y)).collect());
                self.accumulate(grads, *b, || av.iter().zip(bv).map(|(x, y)| -s * l1_slope(x - y)).collect());
            }
            Op::CrossEntropy { logits, probs, labels } => {
                let n = labels.len();
                let k = probs.len() / n;
                self.accumulate(grads, *logits, || {
                    let mut d = probs.clone();
                    for (i, l) in labels.iter().enumerate() {
                        d[i * k + l] -= 1.0;
                    }
                    d.iter_mut().for_each(|v| *v *= g[0] / n as f64);
                    d
                });
            }
        }
        Ok(())
    }
}
