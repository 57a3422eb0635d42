//! Forward and backward kernels for every primitive the two networks use.
//!
//! Kernels are free functions over [`Tensor`]s so inference can call them
//! directly; [`autograd::Graph`](crate::autograd::Graph) records them and
//! calls the matching `*_backward` during reverse accumulation.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::{Error, Result, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Zero padding so that each output extent is `ceil(input / stride)`.
    Same,
    /// No padding: `floor((input - kernel) / stride) + 1`.
    Valid,
}

/// Resolved geometry of one 2-D convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_channels: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride_h: usize,
    pub stride_w: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub pad_top: usize,
    pub pad_left: usize,
}

/// Output extent of a convolution along one axis, with the leading pad.
pub fn conv_out_extent(
    input: usize,
    kernel: usize,
    stride: usize,
    padding: Padding,
) -> Result<(usize, usize)> {
    if stride == 0 || kernel == 0 || input == 0 {
        return Err(Error::shape("kernel, stride and input extents must be positive"));
    }
    match padding {
        Padding::Same => {
            let out = input.div_ceil(stride);
            let needed = ((out - 1) * stride + kernel).saturating_sub(input);
            Ok((out, needed / 2))
        }
        Padding::Valid => {
            if kernel > input {
                return Err(Error::shape(format!(
                    "kernel {kernel} does not fit input extent {input}"
                )));
            }
            Ok(((input - kernel) / stride + 1, 0))
        }
    }
}

impl ConvGeometry {
    pub fn resolve(
        input: &[usize],
        weight: &[usize],
        stride: (usize, usize),
        padding: Padding,
    ) -> Result<Self> {
        let [c, h, w] = *input else {
            return Err(Error::shape(format!("conv2d input must be [C, H, W], got {input:?}")));
        };
        let [o, wc, kh, kw] = *weight else {
            return Err(Error::shape(format!(
                "conv2d weights must be [C_out, C_in, k_h, k_w], got {weight:?}"
            )));
        };
        if wc != c {
            return Err(Error::shape(format!(
                "channel mismatch: input has {c}, weights expect {wc}"
            )));
        }
        let (out_h, pad_top) = conv_out_extent(h, kh, stride.0, padding)?;
        let (out_w, pad_left) = conv_out_extent(w, kw, stride.1, padding)?;
        Ok(ConvGeometry {
            in_channels: c,
            in_h: h,
            in_w: w,
            out_channels: o,
            kernel_h: kh,
            kernel_w: kw,
            stride_h: stride.0,
            stride_w: stride.1,
            out_h,
            out_w,
            pad_top,
            pad_left,
        })
    }

    fn patch_len(&self) -> usize {
        self.in_channels * self.kernel_h * self.kernel_w
    }

    fn positions(&self) -> usize {
        self.out_h * self.out_w
    }

    /// A 1×1 stride-1 convolution reads the input directly as its column matrix.
    fn is_pointwise(&self) -> bool {
        self.kernel_h == 1 && self.kernel_w == 1 && self.stride_h == 1 && self.stride_w == 1
    }

    fn im2col(&self, input: &[f64]) -> Vec<f64> {
        let (k, p) = (self.patch_len(), self.positions());
        let mut cols = vec![0.0; k * p];
        for c in 0..self.in_channels {
            let plane = &input[c * self.in_h * self.in_w..(c + 1) * self.in_h * self.in_w];
            for ki in 0..self.kernel_h {
                for kj in 0..self.kernel_w {
                    let row = (c * self.kernel_h + ki) * self.kernel_w + kj;
                    let dst = &mut cols[row * p..(row + 1) * p];
                    for oy in 0..self.out_h {
                        let iy = (oy * self.stride_h + ki) as isize - self.pad_top as isize;
                        if iy < 0 || iy >= self.in_h as isize {
                            continue;
                        }
                        let src = &plane[iy as usize * self.in_w..(iy as usize + 1) * self.in_w];
                        for ox in 0..self.out_w {
                            let ix = (ox * self.stride_w + kj) as isize - self.pad_left as isize;
                            if ix >= 0 && ix < self.in_w as isize {
                                dst[oy * self.out_w + ox] = src[ix as usize];
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, cols: &[f64], out: &mut [f64]) {
        let p = self.positions();
        for c in 0..self.in_channels {
            let plane = &mut out[c * self.in_h * self.in_w..(c + 1) * self.in_h * self.in_w];
            for ki in 0..self.kernel_h {
                for kj in 0..self.kernel_w {
                    let row = (c * self.kernel_h + ki) * self.kernel_w + kj;
                    let src = &cols[row * p..(row + 1) * p];
                    for oy in 0..self.out_h {
                        let iy = (oy * self.stride_h + ki) as isize - self.pad_top as isize;
                        if iy < 0 || iy >= self.in_h as isize {
                            continue;
                        }
                        let base = iy as usize * self.in_w;
                        for ox in 0..self.out_w {
                            let ix = (ox * self.stride_w + kj) as isize - self.pad_left as isize;
                            if ix >= 0 && ix < self.in_w as isize {
                                plane[base + ix as usize] += src[oy * self.out_w + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Strided matrix view: `(data, row_stride, col_stride)`.
type View<'a> = (&'a [f64], isize, isize);

/// `c = a·b + beta·c` for an `m×k` by `k×n` product into a row-major `m×n`.
fn gemm(m: usize, k: usize, n: usize, a: View<'_>, b: View<'_>, beta: f64, c: &mut [f64]) {
    let extent = |rows: usize, cols: usize, rs: isize, cs: isize| {
        if rows == 0 || cols == 0 {
            0
        } else {
            (rows as isize - 1) * rs + (cols as isize - 1) * cs + 1
        }
    };
    assert!(a.0.len() as isize >= extent(m, k, a.1, a.2), "gemm: lhs too short");
    assert!(b.0.len() as isize >= extent(k, n, b.1, b.2), "gemm: rhs too short");
    assert!(c.len() >= m * n, "gemm: output too short");
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: the assertions above bound every index the kernel touches.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.0.as_ptr(),
            a.1,
            a.2,
            b.0.as_ptr(),
            b.1,
            b.2,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Cross-correlation of `input` [C_in, H, W] with `weight` [C_out, C_in, k_h, k_w]
/// plus a per-channel `bias` [C_out].
pub fn conv2d(
    input: &Tensor,
    weight: &Tensor,
    bias: &Tensor,
    stride: (usize, usize),
    padding: Padding,
) -> Result<Tensor> {
    let g = ConvGeometry::resolve(input.shape(), weight.shape(), stride, padding)?;
    if bias.len() != g.out_channels {
        return Err(Error::shape(format!(
            "bias has {} entries for {} output channels",
            bias.len(),
            g.out_channels
        )));
    }
    let (k, p) = (g.patch_len(), g.positions());
    let mut out = vec![0.0; g.out_channels * p];
    for (o, row) in out.chunks_mut(p).enumerate() {
        row.fill(bias.data()[o]);
    }
    if g.is_pointwise() {
        gemm(g.out_channels, k, p, (weight.data(), k as isize, 1), (input.data(), p as isize, 1), 1.0, &mut out);
    } else {
        let cols = g.im2col(input.data());
        gemm(g.out_channels, k, p, (weight.data(), k as isize, 1), (&cols, p as isize, 1), 1.0, &mut out);
    }
    Tensor::new(&[g.out_channels, g.out_h, g.out_w], out)
}

/// Gradients of [`conv2d`] with respect to input, weight and bias.
pub struct Conv2dGrads {
    pub input: Option<Vec<f64>>,
    pub weight: Option<Vec<f64>>,
    pub bias: Option<Vec<f64>>,
}

pub fn conv2d_backward(
    input: &Tensor,
    weight: &Tensor,
    stride: (usize, usize),
    padding: Padding,
    grad_out: &[f64],
    need: (bool, bool, bool),
) -> Result<Conv2dGrads> {
    let g = ConvGeometry::resolve(input.shape(), weight.shape(), stride, padding)?;
    let (k, p, o) = (g.patch_len(), g.positions(), g.out_channels);
    if grad_out.len() != o * p {
        return Err(Error::shape("conv2d_backward: gradient does not match output"));
    }
    let cols_owned;
    let cols: &[f64] = if g.is_pointwise() {
        input.data()
    } else if need.1 {
        cols_owned = g.im2col(input.data());
        &cols_owned
    } else {
        &[]
    };

    let d_weight = need.1.then(|| {
        let mut dw = vec![0.0; o * k];
        // dW[O,K] = dY[O,P] · colsᵀ
        gemm(o, p, k, (grad_out, p as isize, 1), (cols, 1, p as isize), 0.0, &mut dw);
        dw
    });
    let d_bias = need.2.then(|| grad_out.chunks(p).map(|row| row.iter().sum()).collect());
    let d_input = need.0.then(|| {
        let mut dcols = vec![0.0; k * p];
        // dcols[K,P] = Wᵀ · dY
        gemm(k, o, p, (weight.data(), 1, k as isize), (grad_out, p as isize, 1), 0.0, &mut dcols);
        if g.is_pointwise() {
            dcols
        } else {
            let mut dx = vec![0.0; input.len()];
            g.col2im(&dcols, &mut dx);
            dx
        }
    });
    Ok(Conv2dGrads { input: d_input, weight: d_weight, bias: d_bias })
}

/// `input · weights + bias` for `input` [n], `weights` [n, m], `bias` [m].
pub fn dense(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (n, m) = dense_dims(input, weights, bias)?;
    let mut out = bias.data().to_vec();
    let w = weights.data();
    for (i, &x) in input.data().iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        let row = &w[i * m..(i + 1) * m];
        for (acc, &wij) in out.iter_mut().zip(row) {
            *acc += x * wij;
        }
    }
    debug_assert_eq!(input.len(), n);
    Tensor::new(&[m], out)
}

fn dense_dims(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<(usize, usize)> {
    let [n, m] = *weights.shape() else {
        return Err(Error::shape(format!("dense weights must be [n, m], got {:?}", weights.shape())));
    };
    if input.len() != n {
        return Err(Error::shape(format!(
            "dense input has {} values, weights expect {n}",
            input.len()
        )));
    }
    if bias.len() != m {
        return Err(Error::shape(format!("dense bias has {} values, expected {m}", bias.len())));
    }
    Ok((n, m))
}

/// Returns `(d_input, d_weights, d_bias)`.
pub fn dense_backward(
    input: &Tensor,
    weights: &Tensor,
    grad_out: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let m = grad_out.len();
    let w = weights.data();
    let d_input = (0..input.len())
        .map(|i| w[i * m..(i + 1) * m].iter().zip(grad_out).map(|(a, b)| a * b).sum())
        .collect();
    let mut d_weights = vec![0.0; w.len()];
    for (i, &x) in input.data().iter().enumerate() {
        for (d, &gj) in d_weights[i * m..(i + 1) * m].iter_mut().zip(grad_out) {
            *d = x * gj;
        }
    }
    (d_input, d_weights, grad_out.to_vec())
}

pub fn relu(input: &Tensor) -> Tensor {
    let data = input.data().iter().map(|&x| if x > 0.0 { x } else { 0.0 }).collect();
    Tensor::new(input.shape(), data).expect("same shape")
}

/// The subgradient at 0 is taken as 0.
pub fn relu_backward(input: &Tensor, grad_out: &[f64]) -> Vec<f64> {
    input
        .data()
        .iter()
        .zip(grad_out)
        .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
        .collect()
}

/// Non-overlapping `size`×`size` max pooling over [C, H, W]. Trailing rows and
/// columns that do not fill a window are dropped. Returns the pooled tensor and
/// the flat input index chosen by each output cell.
pub fn maxpool2d(input: &Tensor, size: usize) -> Result<(Tensor, Vec<usize>)> {
    let [c, h, w] = *input.shape() else {
        return Err(Error::shape(format!("maxpool input must be [C, H, W], got {:?}", input.shape())));
    };
    if size == 0 || size > h || size > w {
        return Err(Error::shape(format!("pool window {size} larger than input {h}×{w}")));
    }
    let (oh, ow) = (h / size, w / size);
    let x = input.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut argmax = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = ch * h * w + oy * size * w + ox * size;
                for dy in 0..size {
                    for dx in 0..size {
                        let idx = ch * h * w + (oy * size + dy) * w + ox * size + dx;
                        if x[idx] > x[best] {
                            best = idx;
                        }
                    }
                }
                out.push(x[best]);
                argmax.push(best);
            }
        }
    }
    Ok((Tensor::new(&[c, oh, ow], out)?, argmax))
}

pub fn maxpool2d_backward(input_len: usize, argmax: &[usize], grad_out: &[f64]) -> Vec<f64> {
    let mut dx = vec![0.0; input_len];
    for (&i, &g) in argmax.iter().zip(grad_out) {
        dx[i] += g;
    }
    dx
}

/// Arithmetic mean over the last axis: [C, F, T] → [C, F].
pub fn mean_over_time(input: &Tensor) -> Result<Tensor> {
    let [c, f, t] = *input.shape() else {
        return Err(Error::shape(format!(
            "mean_over_time input must be [C, F, T], got {:?}",
            input.shape()
        )));
    };
    let out = input.data().chunks(t).map(|row| row.iter().sum::<f64>() / t as f64).collect();
    Tensor::new(&[c, f], out)
}

pub fn mean_over_time_backward(input_shape: &[usize], grad_out: &[f64]) -> Vec<f64> {
    let t = input_shape[2];
    let inv = 1.0 / t as f64;
    grad_out.iter().flat_map(|&g| core::iter::repeat_n(g * inv, t)).collect()
}

pub fn norm2(x: &[f64]) -> f64 {
    math::sqrt(x.iter().map(|v| v * v).sum())
}

/// `x / ‖x‖₂`, keeping the input shape.
pub fn l2_normalize(input: &Tensor) -> Result<Tensor> {
    let n = norm2(input.data());
    if n == 0.0 || !n.is_finite() {
        return Err(Error::DegenerateVector);
    }
    let data = input.data().iter().map(|v| v / n).collect();
    Tensor::new(input.shape(), data)
}

/// With `y = x/‖x‖`: `dx = (g − y·(y·g)) / ‖x‖`.
pub fn l2_normalize_backward(input: &Tensor, output: &Tensor, grad_out: &[f64]) -> Vec<f64> {
    let n = norm2(input.data());
    let y = output.data();
    let proj: f64 = y.iter().zip(grad_out).map(|(a, b)| a * b).sum();
    y.iter().zip(grad_out).map(|(yi, gi)| (gi - yi * proj) / n).collect()
}

/// Numerically stable softmax over a flat vector.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| math::exp(z - max)).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `−log softmax(logits)[target]`, returned with the softmax probabilities.
pub fn softmax_xent(logits: &Tensor, target: usize) -> Result<(f64, Vec<f64>)> {
    if target >= logits.len() {
        return Err(Error::contract(format!(
            "target class {target} out of range for {} logits",
            logits.len()
        )));
    }
    let z = logits.data();
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + math::ln(z.iter().map(|&v| math::exp(v - max)).sum());
    Ok((lse - z[target], softmax(z)))
}

pub fn softmax_xent_backward(probs: &[f64], target: usize, grad_out: f64) -> Vec<f64> {
    probs
        .iter()
        .enumerate()
        .map(|(k, &p)| grad_out * (p - if k == target { 1.0 } else { 0.0 }))
        .collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
