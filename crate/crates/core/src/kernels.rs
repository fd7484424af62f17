//! Forward and adjoint kernels for the differentiable ops.
//!
//! Every function here is pure: it takes tensors and returns new ones. The
//! [`crate::autodiff::Tape`] records which kernel produced each value and
//! replays the matching adjoint during `backward`.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// `c[m×n] (+)= a[m×k] · b[k×n]` with explicit row/column strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    c: &mut [f64],
    accumulate: bool,
) {
    debug_assert!(c.len() >= m * n);
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: callers pass slices whose lengths cover the strided extents; the
    // debug assertion above and the shape checks in the public kernels ensure it.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
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

fn dims4(t: &Tensor, op: &'static str, what: &str) -> Result<[usize; 4]> {
    match *t.shape() {
        [a, b, c, d] => Ok([a, b, c, d]),
        ref s => Err(Error::shape(op, format!("{what} must be rank 4, got {s:?}"))),
    }
}

fn dims2(t: &Tensor, op: &'static str, what: &str) -> Result<[usize; 2]> {
    match *t.shape() {
        [a, b] => Ok([a, b]),
        ref s => Err(Error::shape(op, format!("{what} must be rank 2, got {s:?}"))),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub batch: usize,
    pub in_channels: usize,
    pub height: usize,
    pub width: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    pub fn new(input: &[usize], kernel: &[usize], stride: usize, padding: usize) -> Result<Self> {
        let (&[batch, in_channels, height, width], &[out_channels, kc, kernel_h, kernel_w]) =
            (input, kernel)
        else {
            return Err(Error::shape(
                "conv2d",
                format!("expected rank-4 input and kernel, got {input:?} and {kernel:?}"),
            ));
        };
        if stride == 0 {
            return Err(Error::invalid("conv2d stride must be positive"));
        }
        if kc != in_channels {
            return Err(Error::shape(
                "conv2d",
                format!("input channels {in_channels} != kernel input channels {kc}"),
            ));
        }
        if kernel_h > height + 2 * padding {
            return Err(Error::shape(
                "conv2d",
                format!("kernel height {kernel_h} exceeds padded height {}", height + 2 * padding),
            ));
        }
        if kernel_w > width + 2 * padding {
            return Err(Error::shape(
                "conv2d",
                format!("kernel width {kernel_w} exceeds padded width {}", width + 2 * padding),
            ));
        }
        Ok(ConvGeometry {
            batch,
            in_channels,
            height,
            width,
            out_channels,
            kernel_h,
            kernel_w,
            stride,
            padding,
            out_h: (height + 2 * padding - kernel_h) / stride + 1,
            out_w: (width + 2 * padding - kernel_w) / stride + 1,
        })
    }

    fn patch_len(&self) -> usize {
        self.in_channels * self.kernel_h * self.kernel_w
    }

    fn out_plane(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Unfolds one image into `[Cin·Kh·Kw, Ho·Wo]` columns (zero padding).
    fn im2col(&self, image: &[f64], cols: &mut [f64]) {
        let plane = self.out_plane();
        let pad = self.padding as isize;
        for c in 0..self.in_channels {
            let src = &image[c * self.height * self.width..(c + 1) * self.height * self.width];
            for ky in 0..self.kernel_h {
                for kx in 0..self.kernel_w {
                    let row = (c * self.kernel_h + ky) * self.kernel_w + kx;
                    let dst = &mut cols[row * plane..(row + 1) * plane];
                    for oy in 0..self.out_h {
                        let iy = (oy * self.stride + ky) as isize - pad;
                        let line = &mut dst[oy * self.out_w..(oy + 1) * self.out_w];
                        if iy < 0 || iy >= self.height as isize {
                            line.fill(0.0);
                            continue;
                        }
                        let src_row = &src[iy as usize * self.width..(iy as usize + 1) * self.width];
                        for (ox, v) in line.iter_mut().enumerate() {
                            let ix = (ox * self.stride + kx) as isize - pad;
                            *v = if ix < 0 || ix >= self.width as isize {
                                0.0
                            } else {
                                src_row[ix as usize]
                            };
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of [`Self::im2col`]: scatter-adds columns back into an image.
    fn col2im(&self, cols: &[f64], image: &mut [f64]) {
        let plane = self.out_plane();
        let pad = self.padding as isize;
        for c in 0..self.in_channels {
            let dst = &mut image[c * self.height * self.width..(c + 1) * self.height * self.width];
            for ky in 0..self.kernel_h {
                for kx in 0..self.kernel_w {
                    let row = (c * self.kernel_h + ky) * self.kernel_w + kx;
                    let src = &cols[row * plane..(row + 1) * plane];
                    for oy in 0..self.out_h {
                        let iy = (oy * self.stride + ky) as isize - pad;
                        if iy < 0 || iy >= self.height as isize {
                            continue;
                        }
                        for ox in 0..self.out_w {
                            let ix = (ox * self.stride + kx) as isize - pad;
                            if ix >= 0 && ix < self.width as isize {
                                dst[iy as usize * self.width + ix as usize] +=
                                    src[oy * self.out_w + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// 2-D convolution (cross-correlation) with zero padding.
pub fn conv2d(input: &Tensor, kernel: &Tensor, stride: usize, padding: usize) -> Result<Tensor> {
    let g = ConvGeometry::new(input.shape(), kernel.shape(), stride, padding)?;
    let (plane, patch) = (g.out_plane(), g.patch_len());
    let in_img = g.in_channels * g.height * g.width;
    let out_img = g.out_channels * plane;
    let mut out = vec![0.0; g.batch * out_img];
    let mut cols = vec![0.0; patch * plane];
    for b in 0..g.batch {
        g.im2col(&input.data()[b * in_img..(b + 1) * in_img], &mut cols);
        gemm(
            g.out_channels,
            patch,
            plane,
            kernel.data(),
            (patch, 1),
            &cols,
            (plane, 1),
            &mut out[b * out_img..(b + 1) * out_img],
            false,
        );
    }
    Ok(Tensor::from_parts(
        vec![g.batch, g.out_channels, g.out_h, g.out_w],
        out,
    ))
}

/// Returns `(d_input, d_kernel)`; either is skipped when not requested.
pub fn conv2d_backward(
    input: &Tensor,
    kernel: &Tensor,
    stride: usize,
    padding: usize,
    d_out: &Tensor,
    want_input: bool,
    want_kernel: bool,
) -> Result<(Option<Tensor>, Option<Tensor>)> {
    let g = ConvGeometry::new(input.shape(), kernel.shape(), stride, padding)?;
    let (plane, patch) = (g.out_plane(), g.patch_len());
    let in_img = g.in_channels * g.height * g.width;
    let out_img = g.out_channels * plane;
    let mut d_input = want_input.then(|| vec![0.0; input.numel()]);
    let mut d_kernel = want_kernel.then(|| vec![0.0; kernel.numel()]);
    let mut cols = vec![0.0; patch * plane];
    for b in 0..g.batch {
        let dy = &d_out.data()[b * out_img..(b + 1) * out_img];
        if let Some(dk) = d_kernel.as_mut() {
            g.im2col(&input.data()[b * in_img..(b + 1) * in_img], &mut cols);
            // dK[Cout×patch] += dY[Cout×plane] · colsᵀ
            gemm(g.out_channels, plane, patch, dy, (plane, 1), &cols, (1, plane), dk, true);
        }
        if let Some(dx) = d_input.as_mut() {
            // dcols[patch×plane] = Kᵀ · dY
            gemm(
                patch,
                g.out_channels,
                plane,
                kernel.data(),
                (1, patch),
                dy,
                (plane, 1),
                &mut cols,
                false,
            );
            g.col2im(&cols, &mut dx[b * in_img..(b + 1) * in_img]);
        }
    }
    Ok((
        d_input.map(|d| Tensor::from_parts(input.shape().to_vec(), d)),
        d_kernel.map(|d| Tensor::from_parts(kernel.shape().to_vec(), d)),
    ))
}

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

/// Gradient flows only where the input was strictly positive.
pub fn relu_backward(x: &Tensor, d_out: &Tensor) -> Tensor {
    let data = x
        .data()
        .iter()
        .zip(d_out.data())
        .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::from_parts(x.shape().to_vec(), data)
}

/// `x · weightᵀ + bias` for `x: [B,N]`, `weight: [M,N]`, `bias: [M]`.
pub fn dense(x: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let [batch, n] = dims2(x, "dense", "input")?;
    let [m, wn] = dims2(weight, "dense", "weight")?;
    if wn != n {
        return Err(Error::shape(
            "dense",
            format!("input has {n} features but weight expects {wn}"),
        ));
    }
    if bias.shape() != [m] {
        return Err(Error::shape(
            "dense",
            format!("bias shape {:?} != [{m}]", bias.shape()),
        ));
    }
    let mut out = Vec::with_capacity(batch * m);
    for _ in 0..batch {
        out.extend_from_slice(bias.data());
    }
    gemm(batch, n, m, x.data(), (n, 1), weight.data(), (1, n), &mut out, true);
    Ok(Tensor::from_parts(vec![batch, m], out))
}

/// Returns `(d_x, d_weight, d_bias)`.
pub fn dense_backward(x: &Tensor, weight: &Tensor, d_out: &Tensor) -> (Tensor, Tensor, Tensor) {
    let (batch, n) = (x.shape()[0], x.shape()[1]);
    let m = weight.shape()[0];
    let mut dx = vec![0.0; batch * n];
    gemm(batch, m, n, d_out.data(), (m, 1), weight.data(), (n, 1), &mut dx, false);
    let mut dw = vec![0.0; m * n];
    gemm(m, batch, n, d_out.data(), (1, m), x.data(), (n, 1), &mut dw, false);
    let mut db = vec![0.0; m];
    for row in d_out.data().chunks_exact(m) {
        for (acc, &g) in db.iter_mut().zip(row) {
            *acc += g;
        }
    }
    (
        Tensor::from_parts(vec![batch, n], dx),
        Tensor::from_parts(weight.shape().to_vec(), dw),
        Tensor::from_parts(vec![m], db),
    )
}

/// Row-wise softmax of `[B,K]` logits, max-subtracted.
pub fn softmax(logits: &Tensor) -> Result<Tensor> {
    let [_, k] = dims2(logits, "softmax", "logits")?;
    let mut out = logits.data().to_vec();
    for row in out.chunks_exact_mut(k) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    Ok(Tensor::from_parts(logits.shape().to_vec(), out))
}

pub fn softmax_backward(probs: &Tensor, d_out: &Tensor) -> Tensor {
    let k = probs.shape()[1];
    let mut dz = vec![0.0; probs.numel()];
    for ((p, g), d) in probs
        .data()
        .chunks_exact(k)
        .zip(d_out.data().chunks_exact(k))
        .zip(dz.chunks_exact_mut(k))
    {
        let dot: f64 = p.iter().zip(g).map(|(a, b)| a * b).sum();
        for i in 0..k {
            d[i] = p[i] * (g[i] - dot);
        }
    }
    Tensor::from_parts(probs.shape().to_vec(), dz)
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Mean over the batch of `−log softmax(logits)[label]`, fused log-sum-exp form.
pub fn cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<f64> {
    let [batch, k] = dims2(logits, "cross_entropy", "logits")?;
    if labels.len() != batch {
        return Err(Error::shape(
            "cross_entropy",
            format!("{} labels for batch of {batch}", labels.len()),
        ));
    }
    let mut total = 0.0;
    for (i, (row, &label)) in logits.data().chunks_exact(k).zip(labels).enumerate() {
        if label >= k {
            return Err(Error::invalid(format!(
                "label {label} at batch index {i} is outside [0, {k})"
            )));
        }
        total += log_sum_exp(row) - row[label];
    }
    Ok(total / batch as f64)
}

/// Gradient of [`cross_entropy`] w.r.t. the logits, scaled by `d_loss`.
pub fn cross_entropy_backward(logits: &Tensor, labels: &[usize], d_loss: f64) -> Result<Tensor> {
    let mut grad = softmax(logits)?;
    let k = logits.shape()[1];
    let scale = d_loss / labels.len() as f64;
    for (row, &label) in grad.data_mut().chunks_exact_mut(k).zip(labels) {
        row[label] -= 1.0;
        for v in row.iter_mut() {
            *v *= scale;
        }
    }
    Ok(grad)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoolKind {
    Max,
    GlobalAvg,
}

/// Windowed max (no padding) or per-channel global mean.
///
/// Max pooling also returns, per output element, the flat input index of the
/// selected maximum (first occurrence wins), which the adjoint routes through.
pub fn pool(
    input: &Tensor,
    kind: PoolKind,
    window: usize,
    stride: usize,
) -> Result<(Tensor, Vec<usize>)> {
    let [batch, channels, h, w] = dims4(input, "pool", "input")?;
    match kind {
        PoolKind::GlobalAvg => {
            let plane = h * w;
            let out = input
                .data()
                .chunks_exact(plane)
                .map(|p| p.iter().sum::<f64>() / plane as f64)
                .collect();
            Ok((Tensor::from_parts(vec![batch, channels, 1, 1], out), Vec::new()))
        }
        PoolKind::Max => {
            if window == 0 || stride == 0 {
                return Err(Error::invalid("pool window and stride must be positive"));
            }
            if window > h || window > w {
                return Err(Error::invalid(format!(
                    "pool window {window} larger than spatial dims {h}x{w}"
                )));
            }
            let (oh, ow) = ((h - window) / stride + 1, (w - window) / stride + 1);
            let mut out = Vec::with_capacity(batch * channels * oh * ow);
            let mut argmax = Vec::with_capacity(out.capacity());
            let data = input.data();
            for plane_idx in 0..batch * channels {
                let base = plane_idx * h * w;
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut best = base + oy * stride * w + ox * stride;
                        for ky in 0..window {
                            for kx in 0..window {
                                let idx = base + (oy * stride + ky) * w + ox * stride + kx;
                                if data[idx] > data[best] {
                                    best = idx;
                                }
                            }
                        }
                        out.push(data[best]);
                        argmax.push(best);
                    }
                }
            }
            Ok((
                Tensor::from_parts(vec![batch, channels, oh, ow], out),
                argmax,
            ))
        }
    }
}

pub fn max_pool_backward(input: &Tensor, argmax: &[usize], d_out: &Tensor) -> Tensor {
    let mut dx = vec![0.0; input.numel()];
    for (&idx, &g) in argmax.iter().zip(d_out.data()) {
        dx[idx] += g;
    }
    Tensor::from_parts(input.shape().to_vec(), dx)
}

pub fn global_avg_pool_backward(input: &Tensor, d_out: &Tensor) -> Tensor {
    let plane = input.shape()[2] * input.shape()[3];
    let mut dx = Vec::with_capacity(input.numel());
    for &g in d_out.data() {
        dx.extend(std::iter::repeat(g / plane as f64).take(plane));
    }
    Tensor::from_parts(input.shape().to_vec(), dx)
}

/// Per-channel `x·scale[c] + shift[c]` over `[B,C,H,W]` (the "batch-norm-lite" layer).
pub fn scale_shift(x: &Tensor, scale: &Tensor, shift: &Tensor) -> Result<Tensor> {
    let [_, c, h, w] = dims4(x, "scale_shift", "input")?;
    if scale.shape() != [c] || shift.shape() != [c] {
        return Err(Error::shape(
            "scale_shift",
            format!(
                "scale {:?} / shift {:?} must both be [{c}]",
                scale.shape(),
                shift.shape()
            ),
        ));
    }
    let plane = h * w;
    let mut out = x.data().to_vec();
    for (i, p) in out.chunks_exact_mut(plane).enumerate() {
        let ch = i % c;
        let (g, b) = (scale.data()[ch], shift.data()[ch]);
        for v in p.iter_mut() {
            *v = *v * g + b;
        }
    }
    Ok(Tensor::from_parts(x.shape().to_vec(), out))
}

/// Returns `(d_x, d_scale, d_shift)`.
pub fn scale_shift_backward(x: &Tensor, scale: &Tensor, d_out: &Tensor) -> (Tensor, Tensor, Tensor) {
    let c = scale.numel();
    let plane = x.shape()[2] * x.shape()[3];
    let mut dx = d_out.data().to_vec();
    let mut ds = vec![0.0; c];
    let mut db = vec![0.0; c];
    for (i, (dp, xp)) in dx
        .chunks_exact_mut(plane)
        .zip(x.data().chunks_exact(plane))
        .enumerate()
    {
        let ch = i % c;
        let g = scale.data()[ch];
        for (d, &xv) in dp.iter_mut().zip(xp) {
            ds[ch] += *d * xv;
            db[ch] += *d;
            *d *= g;
        }
    }
    (
        Tensor::from_parts(x.shape().to_vec(), dx),
        Tensor::from_parts(vec![c], ds),
        Tensor::from_parts(vec![c], db),
    )
}
