//! im2col convolution kernels over `[N, C, H, W]` buffers. 1-D inputs use
//! `H = 1` with a unit kernel along that axis.
//!
//! The operation is cross-correlation. Every axis is zero-padded by
//! `(span - 1) / 2` where `span = (kernel - 1) * dilation + 1`, which gives
//! "same" length at stride 1 and `floor((len + 2 * pad - span) / stride) + 1`
//! outputs in general.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub kernel: [usize; 2],
    pub stride: [usize; 2],
    pub dilation: [usize; 2],
}

impl ConvGeom {
    pub fn one_d(kernel: usize, stride: usize, dilation: usize) -> Self {
        Self {
            kernel: [1, kernel],
            stride: [1, stride],
            dilation: [1, dilation],
        }
    }

    pub fn span(&self, axis: usize) -> usize {
        (self.kernel[axis] - 1) * self.dilation[axis] + 1
    }

    pub fn pad(&self, axis: usize) -> usize {
        (self.span(axis) - 1) / 2
    }

    pub fn out_len(&self, axis: usize, len: usize) -> usize {
        (len + 2 * self.pad(axis) - self.span(axis)) / self.stride[axis] + 1
    }

    pub fn validate(&self) -> Result<()> {
        for axis in 0..2 {
            if self.kernel[axis] == 0 || self.stride[axis] == 0 || self.dilation[axis] == 0 {
                return Err(Error::InvalidParams(format!("kernel, stride and dilation must be >= 1: {self:?}")));
            }
            if self.kernel[axis] % 2 == 0 {
                return Err(Error::InvalidParams(format!("kernel sizes must be odd: {self:?}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvDims {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub o: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvDims {
    pub fn resolve(geom: &ConvGeom, n: usize, c: usize, h: usize, w: usize, o: usize) -> Result<Self> {
        geom.validate()?;
        for (axis, len) in [(0, h), (1, w)] {
            if len < geom.span(axis) {
                return Err(Error::Shape(format!(
                    "spatial extent {len} is smaller than the effective kernel span {}",
                    geom.span(axis)
                )));
            }
        }
        let dims = Self {
            n,
            c,
            h,
            w,
            o,
            oh: geom.out_len(0, h),
            ow: geom.out_len(1, w),
        };
        if dims.oh == 0 || dims.ow == 0 {
            return Err(Error::Shape("convolution would produce an empty output".into()));
        }
        Ok(dims)
    }

    fn patch(&self, geom: &ConvGeom) -> usize {
        self.c * geom.kernel[0] * geom.kernel[1]
    }

    fn positions(&self) -> usize {
        self.oh * self.ow
    }
}

/// For each output row, the input row it reads for kernel tap `kh`
/// (`None` inside the zero padding). Same for columns.
fn tap_index(geom: &ConvGeom, axis: usize, out: usize, tap: usize, len: usize) -> Option<usize> {
    let pos = (out * geom.stride[axis] + tap * geom.dilation[axis]) as isize - geom.pad(axis) as isize;
    (pos >= 0 && (pos as usize) < len).then_some(pos as usize)
}

fn im2col(x: &[f64], d: &ConvDims, g: &ConvGeom, cols: &mut [f64]) {
    let p = d.positions();
    let [kh_n, kw_n] = g.kernel;
    for c in 0..d.c {
        let plane = &x[c * d.h * d.w..(c + 1) * d.h * d.w];
        for kh in 0..kh_n {
            for kw in 0..kw_n {
                let row = (c * kh_n + kh) * kw_n + kw;
                let dst = &mut cols[row * p..(row + 1) * p];
                for oh in 0..d.oh {
                    let out_row = &mut dst[oh * d.ow..(oh + 1) * d.ow];
                    match tap_index(g, 0, oh, kh, d.h) {
                        None => out_row.iter_mut().for_each(|v| *v = 0.0),
                        Some(ih) => {
                            let src = &plane[ih * d.w..(ih + 1) * d.w];
                            let offset = (kw * g.dilation[1]) as isize - g.pad(1) as isize;
                            if g.stride[1] == 1 {
                                for (ow, v) in out_row.iter_mut().enumerate() {
                                    let iw = ow as isize + offset;
                                    *v = if iw >= 0 && (iw as usize) < d.w { src[iw as usize] } else { 0.0 };
                                }
                            } else {
                                for (ow, v) in out_row.iter_mut().enumerate() {
                                    let iw = (ow * g.stride[1]) as isize + offset;
                                    *v = if iw >= 0 && (iw as usize) < d.w { src[iw as usize] } else { 0.0 };
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

fn col2im(cols: &[f64], d: &ConvDims, g: &ConvGeom, dx: &mut [f64]) {
    let p = d.positions();
    let [kh_n, kw_n] = g.kernel;
    for c in 0..d.c {
        let plane = &mut dx[c * d.h * d.w..(c + 1) * d.h * d.w];
        for kh in 0..kh_n {
            for kw in 0..kw_n {
                let row = (c * kh_n + kh) * kw_n + kw;
                let src = &cols[row * p..(row + 1) * p];
                for oh in 0..d.oh {
                    let Some(ih) = tap_index(g, 0, oh, kh, d.h) else {
                        continue;
                    };
                    let dst = &mut plane[ih * d.w..(ih + 1) * d.w];
                    let offset = (kw * g.dilation[1]) as isize - g.pad(1) as isize;
                    for (ow, v) in src[oh * d.ow..(oh + 1) * d.ow].iter().enumerate() {
                        let iw = (ow * g.stride[1]) as isize + offset;
                        if iw >= 0 && (iw as usize) < d.w {
                            dst[iw as usize] += v;
                        }
                    }
                }
            }
        }
    }
}

/// `c[m x n] = alpha * a[m x k] * b[k x n] + beta * c`, with explicit strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
) {
    debug_assert!(c.len() >= m * n);
    debug_assert!(m == 0 || k == 0 || a.len() > (m - 1) * rsa + (k - 1) * csa);
    debug_assert!(k == 0 || n == 0 || b.len() > (k - 1) * rsb + (n - 1) * csb);
    // SAFETY: the debug assertions above spell out the bounds every caller
    // guarantees by construction; matrixmultiply reads a and b and writes c
    // strictly within those extents.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

pub(crate) fn forward(x: &[f64], weight: &[f64], bias: Option<&[f64]>, d: &ConvDims, g: &ConvGeom) -> Vec<f64> {
    let patch = d.patch(g);
    let p = d.positions();
    let mut out = vec![0.0; d.n * d.o * p];
    let mut cols = vec![0.0; patch * p];
    for n in 0..d.n {
        im2col(&x[n * d.c * d.h * d.w..(n + 1) * d.c * d.h * d.w], d, g, &mut cols);
        let y = &mut out[n * d.o * p..(n + 1) * d.o * p];
        if let Some(b) = bias {
            for (o, bo) in b.iter().enumerate() {
                y[o * p..(o + 1) * p].iter_mut().for_each(|v| *v = *bo);
            }
        }
        gemm(d.o, patch, p, 1.0, weight, (patch, 1), &cols, (p, 1), 1.0, y);
    }
    out
}

pub(crate) struct ConvGrads {
    pub input: Option<Vec<f64>>,
    pub weight: Option<Vec<f64>>,
    pub bias: Option<Vec<f64>>,
}

pub(crate) fn backward(
    x: &[f64],
    weight: &[f64],
    dy: &[f64],
    d: &ConvDims,
    g: &ConvGeom,
    (need_input, need_weight, need_bias): (bool, bool, bool),
) -> ConvGrads {
    let patch = d.patch(g);
    let p = d.positions();
    let mut dx = need_input.then(|| vec![0.0; x.len()]);
    let mut dw = need_weight.then(|| vec![0.0; weight.len()]);
    let mut db = need_bias.then(|| vec![0.0; d.o]);
    let mut cols = vec![0.0; patch * p];
    for n in 0..d.n {
        let dyn_ = &dy[n * d.o * p..(n + 1) * d.o * p];
        if let Some(db) = db.as_mut() {
            for (o, acc) in db.iter_mut().enumerate() {
                *acc += dyn_[o * p..(o + 1) * p].iter().sum::<f64>();
            }
        }
        if let Some(dw) = dw.as_mut() {
            im2col(&x[n * d.c * d.h * d.w..(n + 1) * d.c * d.h * d.w], d, g, &mut cols);
            // dW[o, r] += sum_p dy[o, p] * cols[r, p]
            gemm(d.o, p, patch, 1.0, dyn_, (p, 1), &cols, (1, p), 1.0, dw);
        }
        if let Some(dx) = dx.as_mut() {
            // dcols[r, p] = sum_o W[o, r] * dy[o, p]
            gemm(patch, d.o, p, 1.0, weight, (1, patch), dyn_, (p, 1), 0.0, &mut cols);
            col2im(&cols, d, g, &mut dx[n * d.c * d.h * d.w..(n + 1) * d.c * d.h * d.w]);
        }
    }
    ConvGrads {
        input: dx,
        weight: dw,
        bias: db,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct quadruple loop.
    fn naive(x: &[f64], w: &[f64], b: &[f64], d: &ConvDims, g: &ConvGeom) -> Vec<f64> {
        let mut out = vec![0.0; d.n * d.o * d.oh * d.ow];
        for n in 0..d.n {
            for o in 0..d.o {
                for oh in 0..d.oh {
                    for ow in 0..d.ow {
                        let mut acc = b[o];
                        for c in 0..d.c {
                            for kh in 0..g.kernel[0] {
                                for kw in 0..g.kernel[1] {
                                    let ih = (oh * g.stride[0] + kh * g.dilation[0]) as isize - g.pad(0) as isize;
                                    let iw = (ow * g.stride[1] + kw * g.dilation[1]) as isize - g.pad(1) as isize;
                                    if ih < 0 || iw < 0 || ih as usize >= d.h || iw as usize >= d.w {
                                        continue;
                                    }
                                    acc += w[((o * d.c + c) * g.kernel[0] + kh) * g.kernel[1] + kw]
                                        * x[((n * d.c + c) * d.h + ih as usize) * d.w + iw as usize];
                                }
                            }
                        }
                        out[((n * d.o + o) * d.oh + oh) * d.ow + ow] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn matches_naive_loop_on_2d_strided_dilated() {
        let g = ConvGeom {
            kernel: [3, 5],
            stride: [2, 3],
            dilation: [2, 1],
        };
        let d = ConvDims::resolve(&g, 2, 3, 9, 17, 4).unwrap();
        let x: Vec<f64> = (0..2 * 3 * 9 * 17).map(|i| ((i * 37 % 101) as f64 / 50.0) - 1.0).collect();
        let w: Vec<f64> = (0..4 * 3 * 3 * 5).map(|i| ((i * 13 % 29) as f64 / 14.0) - 1.0).collect();
        let b = [0.1, -0.2, 0.3, 0.0];
        let got = forward(&x, &w, Some(&b), &d, &g);
        let want = naive(&x, &w, &b, &d, &g);
        for (a, e) in got.iter().zip(&want) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn span_check_and_odd_kernels() {
        let g = ConvGeom::one_d(3, 1, 4);
        assert!(ConvDims::resolve(&g, 1, 1, 1, 8, 1).is_err());
        assert!(ConvDims::resolve(&g, 1, 1, 1, 9, 1).is_ok());
        assert!(ConvGeom::one_d(4, 1, 1).validate().is_err());
        assert!(ConvGeom::one_d(3, 0, 1).validate().is_err());
    }
}
