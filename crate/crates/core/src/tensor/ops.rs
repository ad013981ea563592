//! Forward kernels and their reverse-mode counterparts.
//!
//! Every differentiable forward `foo` has a matching `foo_backward` taking the
//! upstream gradient and returning gradients for each differentiable input.
//! The autodiff [`Tape`](super::Tape) is a thin bookkeeping layer over these.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

fn out_extent(size: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = size + 2 * pad;
    if padded < k {
        return None;
    }
    Some((padded - k) / stride + 1)
}

/// Output spatial extent of a convolution or pooling window.
pub fn conv_out_size(size: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    if stride == 0 || kernel == 0 {
        return None;
    }
    out_extent(size, kernel, stride, pad)
}

// c[m x n] += a[m x k] * b[k x n]
fn gemm_acc<T: Scalar>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for (p, &av) in a[i * k..(i + 1) * k].iter().enumerate() {
            if av == T::zero() {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
}

// c[m x k] += a[m x n] * b[k x n]^T
fn gemm_abt_acc<T: Scalar>(a: &[T], b: &[T], c: &mut [T], m: usize, n: usize, k: usize) {
    for i in 0..m {
        let arow = &a[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            let mut acc = T::zero();
            for (&x, &y) in arow.iter().zip(brow) {
                acc += x * y;
            }
            c[i * k + p] += acc;
        }
    }
}

// c[k x n] += a[m x k]^T * b[m x n]
fn gemm_atb_acc<T: Scalar>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let brow = &b[i * n..(i + 1) * n];
        for (p, &av) in a[i * k..(i + 1) * k].iter().enumerate() {
            if av == T::zero() {
                continue;
            }
            let crow = &mut c[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
}

#[derive(Clone, Copy)]
struct ConvGeom {
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl ConvGeom {
    fn is_identity_layout(&self) -> bool {
        self.k == 1 && self.stride == 1 && self.pad == 0
    }

    fn im2col<T: Scalar>(&self, img: &[T], col: &mut [T]) {
        let ConvGeom {
            c,
            h,
            w,
            k,
            stride,
            pad,
            oh,
            ow,
        } = *self;
        let plane = oh * ow;
        for ci in 0..c {
            let src = &img[ci * h * w..(ci + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = (ci * k + ky) * k + kx;
                    let dst = &mut col[row * plane..(row + 1) * plane];
                    for oy in 0..oh {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        let drow = &mut dst[oy * ow..(oy + 1) * ow];
                        if iy < 0 || iy >= h as isize {
                            drow.iter_mut().for_each(|v| *v = T::zero());
                            continue;
                        }
                        let srow = &src[iy as usize * w..(iy as usize + 1) * w];
                        for (ox, d) in drow.iter_mut().enumerate() {
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            *d = if ix < 0 || ix >= w as isize {
                                T::zero()
                            } else {
                                srow[ix as usize]
                            };
                        }
                    }
                }
            }
        }
    }

    fn col2im<T: Scalar>(&self, col: &[T], img: &mut [T]) {
        let ConvGeom {
            c,
            h,
            w,
            k,
            stride,
            pad,
            oh,
            ow,
        } = *self;
        let plane = oh * ow;
        for ci in 0..c {
            let dst = &mut img[ci * h * w..(ci + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = (ci * k + ky) * k + kx;
                    let src = &col[row * plane..(row + 1) * plane];
                    for oy in 0..oh {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let iy = iy as usize;
                        for ox in 0..ow {
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if ix >= 0 && (ix as usize) < w {
                                dst[iy * w + ix as usize] += src[oy * ow + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

fn conv_geom<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    stride: usize,
    pad: usize,
    what: &str,
) -> Result<(usize, usize, ConvGeom)> {
    let (n, c, h, w) = input.dims4(what)?;
    let (o, i, kh, kw) = weight.dims4(what)?;
    if i != c {
        return Err(Error::shape(format!(
            "{what}: input {:?} has {c} channels but weight {:?} expects {i}",
            input.dims(),
            weight.dims()
        )));
    }
    if kh != kw {
        return Err(Error::shape(format!(
            "{what}: kernel must be square, weight {:?}",
            weight.dims()
        )));
    }
    if stride == 0 {
        return Err(Error::arg(format!("{what}: stride must be >= 1")));
    }
    let (oh, ow) = match (
        out_extent(h, kh, stride, pad),
        out_extent(w, kw, stride, pad),
    ) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(Error::shape(format!(
                "{what}: kernel {:?} does not fit input {:?} with pad {pad}",
                weight.dims(),
                input.dims()
            )))
        }
    };
    Ok((
        n,
        o,
        ConvGeom {
            c,
            h,
            w,
            k: kh,
            stride,
            pad,
            oh,
            ow,
        },
    ))
}

/// Dense 2-D convolution (cross-correlation), input NCHW, weight OIKK.
pub fn conv2d<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>> {
    let (n, o, g) = conv_geom(input, weight, stride, pad, "conv2d")?;
    let ckk = g.c * g.k * g.k;
    let plane = g.oh * g.ow;
    let in_sz = g.c * g.h * g.w;
    let mut out = vec![T::zero(); n * o * plane];
    let mut col = if g.is_identity_layout() {
        Vec::new()
    } else {
        vec![T::zero(); ckk * plane]
    };
    for s in 0..n {
        let img = &input.data()[s * in_sz..(s + 1) * in_sz];
        let dst = &mut out[s * o * plane..(s + 1) * o * plane];
        if g.is_identity_layout() {
            gemm_acc(weight.data(), img, dst, o, ckk, plane);
        } else {
            g.im2col(img, &mut col);
            gemm_acc(weight.data(), &col, dst, o, ckk, plane);
        }
    }
    Tensor::new(&[n, o, g.oh, g.ow], out)
}

/// Gradients of [`conv2d`] with respect to input and weight.
pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    stride: usize,
    pad: usize,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let (n, o, g) = conv_geom(input, weight, stride, pad, "conv2d")?;
    let ckk = g.c * g.k * g.k;
    let plane = g.oh * g.ow;
    let in_sz = g.c * g.h * g.w;
    if grad_out.dims() != [n, o, g.oh, g.ow] {
        return Err(Error::shape(format!(
            "conv2d backward: grad {:?} does not match output [{n}, {o}, {}, {}]",
            grad_out.dims(),
            g.oh,
            g.ow
        )));
    }
    let mut gin = vec![T::zero(); input.len()];
    let mut gw = vec![T::zero(); weight.len()];
    let mut col = vec![T::zero(); ckk * plane];
    let mut gcol = vec![T::zero(); ckk * plane];
    for s in 0..n {
        let img = &input.data()[s * in_sz..(s + 1) * in_sz];
        let go = &grad_out.data()[s * o * plane..(s + 1) * o * plane];
        let gimg = &mut gin[s * in_sz..(s + 1) * in_sz];
        if g.is_identity_layout() {
            gemm_abt_acc(go, img, &mut gw, o, plane, ckk);
            gemm_atb_acc(weight.data(), go, gimg, o, ckk, plane);
        } else {
            g.im2col(img, &mut col);
            gemm_abt_acc(go, &col, &mut gw, o, plane, ckk);
            gcol.iter_mut().for_each(|v| *v = T::zero());
            gemm_atb_acc(weight.data(), go, &mut gcol, o, ckk, plane);
            g.col2im(&gcol, gimg);
        }
    }
    Ok((
        Tensor::new(input.dims(), gin)?,
        Tensor::new(weight.dims(), gw)?,
    ))
}

fn depthwise_geom<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<(usize, ConvGeom)> {
    let (n, c, h, w) = input.dims4("depthwise_conv2d")?;
    let (wc, one, kh, kw) = weight.dims4("depthwise_conv2d")?;
    if wc != c || one != 1 {
        return Err(Error::shape(format!(
            "depthwise_conv2d: input {:?} needs weight [{c}, 1, K, K], got {:?}",
            input.dims(),
            weight.dims()
        )));
    }
    if kh != kw {
        return Err(Error::shape(format!(
            "depthwise_conv2d: kernel must be square, weight {:?}",
            weight.dims()
        )));
    }
    if stride == 0 {
        return Err(Error::arg("depthwise_conv2d: stride must be >= 1"));
    }
    let (oh, ow) = match (
        out_extent(h, kh, stride, pad),
        out_extent(w, kw, stride, pad),
    ) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(Error::shape(format!(
                "depthwise_conv2d: kernel {:?} does not fit input {:?}",
                weight.dims(),
                input.dims()
            )))
        }
    };
    Ok((
        n,
        ConvGeom {
            c,
            h,
            w,
            k: kh,
            stride,
            pad,
            oh,
            ow,
        },
    ))
}

/// Per-channel convolution, input NCHW, weight C1KK; channel count preserved.
pub fn depthwise_conv2d<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>> {
    let (n, g) = depthwise_geom(input, weight, stride, pad)?;
    let (h, w, k, oh, ow) = (g.h, g.w, g.k, g.oh, g.ow);
    let mut out = vec![T::zero(); n * g.c * oh * ow];
    for s in 0..n {
        for ch in 0..g.c {
            let src = &input.data()[(s * g.c + ch) * h * w..][..h * w];
            let ker = &weight.data()[ch * k * k..(ch + 1) * k * k];
            let dst = &mut out[(s * g.c + ch) * oh * ow..][..oh * ow];
            for oy in 0..oh {
                for ky in 0..k {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let srow = &src[iy as usize * w..][..w];
                    for kx in 0..k {
                        let wv = ker[ky * k + kx];
                        for ox in 0..ow {
                            let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                            if ix >= 0 && (ix as usize) < w {
                                dst[oy * ow + ox] += wv * srow[ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::new(&[n, g.c, oh, ow], out)
}

/// Gradients of [`depthwise_conv2d`] with respect to input and weight.
pub fn depthwise_conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    stride: usize,
    pad: usize,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let (n, g) = depthwise_geom(input, weight, stride, pad)?;
    let (h, w, k, oh, ow) = (g.h, g.w, g.k, g.oh, g.ow);
    if grad_out.dims() != [n, g.c, oh, ow] {
        return Err(Error::shape(format!(
            "depthwise_conv2d backward: grad {:?} does not match output",
            grad_out.dims()
        )));
    }
    let mut gin = vec![T::zero(); input.len()];
    let mut gw = vec![T::zero(); weight.len()];
    for s in 0..n {
        for ch in 0..g.c {
            let off_in = (s * g.c + ch) * h * w;
            let src = &input.data()[off_in..off_in + h * w];
            let ker = &weight.data()[ch * k * k..(ch + 1) * k * k];
            let go = &grad_out.data()[(s * g.c + ch) * oh * ow..][..oh * ow];
            let gsrc = &mut gin[off_in..off_in + h * w];
            let gker = &mut gw[ch * k * k..(ch + 1) * k * k];
            for oy in 0..oh {
                for ky in 0..k {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let iy = iy as usize;
                    for kx in 0..k {
                        let wv = ker[ky * k + kx];
                        let mut acc = T::zero();
                        for ox in 0..ow {
                            let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                            if ix >= 0 && (ix as usize) < w {
                                let gv = go[oy * ow + ox];
                                acc += gv * src[iy * w + ix as usize];
                                gsrc[iy * w + ix as usize] += wv * gv;
                            }
                        }
                        gker[ky * k + kx] += acc;
                    }
                }
            }
        }
    }
    Ok((
        Tensor::new(input.dims(), gin)?,
        Tensor::new(weight.dims(), gw)?,
    ))
}

fn pointwise_check<T: Scalar>(input: &Tensor<T>, weight: &Tensor<T>) -> Result<()> {
    let (_, _, kh, kw) = weight.dims4("pointwise_conv2d")?;
    if kh != 1 || kw != 1 {
        return Err(Error::shape(format!(
            "pointwise_conv2d: weight {:?} must be [O, C, 1, 1] for input {:?}",
            weight.dims(),
            input.dims()
        )));
    }
    Ok(())
}

/// 1x1 convolution: a per-pixel linear map over channels, weight OC11.
pub fn pointwise_conv2d<T: Scalar>(input: &Tensor<T>, weight: &Tensor<T>) -> Result<Tensor<T>> {
    pointwise_check(input, weight)?;
    conv2d(input, weight, 1, 0)
}

pub fn pointwise_conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    pointwise_check(input, weight)?;
    conv2d_backward(input, weight, 1, 0, grad_out)
}

/// Adds `bias[c]` to every element of channel `c` (NCHW).
pub fn add_channel_bias<T: Scalar>(input: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c, h, w) = input.dims4("add_channel_bias")?;
    if bias.len() != c {
        return Err(Error::shape(format!(
            "add_channel_bias: input {:?} vs bias {:?}",
            input.dims(),
            bias.dims()
        )));
    }
    let mut out = input.data().to_vec();
    for s in 0..n {
        for ch in 0..c {
            let b = bias.data()[ch];
            out[(s * c + ch) * h * w..][..h * w]
                .iter_mut()
                .for_each(|v| *v += b);
        }
    }
    Tensor::new(input.dims(), out)
}

pub fn add_channel_bias_backward<T: Scalar>(
    input_dims: &[usize],
    grad_out: &Tensor<T>,
) -> Tensor<T> {
    let (n, c, hw) = (input_dims[0], input_dims[1], input_dims[2] * input_dims[3]);
    let mut gb = vec![T::zero(); c];
    for s in 0..n {
        for (ch, g) in gb.iter_mut().enumerate() {
            *g += grad_out.data()[(s * c + ch) * hw..][..hw]
                .iter()
                .copied()
                .sum::<T>();
        }
    }
    Tensor::new(&[c], gb).expect("bias length equals channels")
}

/// Max pooling with floor semantics. Returns the output and, per output
/// element, the flat input index it was taken from (first maximum in
/// row-major window order on ties).
pub fn maxpool2d<T: Scalar>(
    input: &Tensor<T>,
    window: usize,
    stride: usize,
) -> Result<(Tensor<T>, Vec<usize>)> {
    let (n, c, h, w) = input.dims4("maxpool2d")?;
    if window == 0 || stride == 0 {
        return Err(Error::arg("maxpool2d: window and stride must be >= 1"));
    }
    if window > h || window > w {
        return Err(Error::shape(format!(
            "maxpool2d: window {window} larger than input {:?}",
            input.dims()
        )));
    }
    let oh = (h - window) / stride + 1;
    let ow = (w - window) / stride + 1;
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut arg = Vec::with_capacity(n * c * oh * ow);
    let data = input.data();
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + oy * stride * w + ox * stride;
                let mut best_v = data[best];
                for ky in 0..window {
                    let row = base + (oy * stride + ky) * w + ox * stride;
                    for (kx, &v) in data[row..row + window].iter().enumerate() {
                        if v > best_v {
                            best_v = v;
                            best = row + kx;
                        }
                    }
                }
                out.push(best_v);
                arg.push(best);
            }
        }
    }
    Ok((Tensor::new(&[n, c, oh, ow], out)?, arg))
}

pub fn maxpool2d_backward<T: Scalar>(
    input_dims: &[usize],
    argmax: &[usize],
    grad_out: &Tensor<T>,
) -> Tensor<T> {
    let mut gin = Tensor::zeros(input_dims);
    let g = gin.data_mut();
    for (&idx, &gv) in argmax.iter().zip(grad_out.data()) {
        g[idx] += gv;
    }
    gin
}

fn normalize_groups<T: Scalar>(data: &[T], group: usize, eps: T) -> (Vec<T>, Vec<T>) {
    let mut out = vec![T::zero(); data.len()];
    let mut inv_stds = Vec::with_capacity(data.len() / group);
    let m = T::of(group as f64);
    for (src, dst) in data.chunks(group).zip(out.chunks_mut(group)) {
        let mean = src.iter().copied().sum::<T>() / m;
        let var = src.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / m;
        let inv = T::one() / (var + eps).sqrt();
        for (d, &s) in dst.iter_mut().zip(src) {
            *d = (s - mean) * inv;
        }
        inv_stds.push(inv);
    }
    (out, inv_stds)
}

fn normalize_groups_backward<T: Scalar>(
    output: &[T],
    inv_stds: &[T],
    grad_out: &[T],
    group: usize,
) -> Vec<T> {
    let mut gin = vec![T::zero(); output.len()];
    let m = T::of(group as f64);
    for (((y, gy), gx), &inv) in output
        .chunks(group)
        .zip(grad_out.chunks(group))
        .zip(gin.chunks_mut(group))
        .zip(inv_stds)
    {
        let mean_g = gy.iter().copied().sum::<T>() / m;
        let mean_gy = gy.iter().zip(y).map(|(&a, &b)| a * b).sum::<T>() / m;
        for ((d, &g), &yy) in gx.iter_mut().zip(gy).zip(y) {
            *d = inv * (g - mean_g - yy * mean_gy);
        }
    }
    gin
}

/// Normalizes every (sample, channel) plane to zero mean and unit variance.
/// No learned affine. Returns output and per-plane inverse std.
pub fn instance_norm<T: Scalar>(input: &Tensor<T>, eps: T) -> Result<(Tensor<T>, Vec<T>)> {
    let (_, _, h, w) = input.dims4("instance_norm")?;
    let (out, inv) = normalize_groups(input.data(), h * w, eps);
    Ok((Tensor::new(input.dims(), out)?, inv))
}

pub fn instance_norm_backward<T: Scalar>(
    output: &Tensor<T>,
    inv_stds: &[T],
    grad_out: &Tensor<T>,
) -> Tensor<T> {
    let d = output.dims();
    let g = normalize_groups_backward(output.data(), inv_stds, grad_out.data(), d[2] * d[3]);
    Tensor::new(d, g).expect("same dims")
}

/// Normalizes each sample over all of C*H*W. No learned affine.
pub fn layer_norm<T: Scalar>(input: &Tensor<T>, eps: T) -> Result<(Tensor<T>, Vec<T>)> {
    let (_, c, h, w) = input.dims4("layer_norm")?;
    let (out, inv) = normalize_groups(input.data(), c * h * w, eps);
    Ok((Tensor::new(input.dims(), out)?, inv))
}

pub fn layer_norm_backward<T: Scalar>(
    output: &Tensor<T>,
    inv_stds: &[T],
    grad_out: &Tensor<T>,
) -> Tensor<T> {
    let d = output.dims();
    let g = normalize_groups_backward(output.data(), inv_stds, grad_out.data(), d[1] * d[2] * d[3]);
    Tensor::new(d, g).expect("same dims")
}

pub fn relu<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Subgradient 0 at 0.
pub fn relu_backward<T: Scalar>(input: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    let g = input
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::new(input.dims(), g).expect("same dims")
}

pub fn sigmoid<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|v| {
        if v >= T::zero() {
            T::one() / (T::one() + (-v).exp())
        } else {
            let e = v.exp();
            e / (T::one() + e)
        }
    })
}

pub fn sigmoid_backward<T: Scalar>(output: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    let g = output
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&y, &g)| g * y * (T::one() - y))
        .collect();
    Tensor::new(output.dims(), g).expect("same dims")
}

/// `input (N x D) * weight (D x M) + bias (M)`.
pub fn fully_connected<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>> {
    let (n, d) = input.dims2("fully_connected input")?;
    let (wd, m) = weight.dims2("fully_connected weight")?;
    if wd != d || bias.len() != m {
        return Err(Error::shape(format!(
            "fully_connected: input {:?}, weight {:?}, bias {:?}",
            input.dims(),
            weight.dims(),
            bias.dims()
        )));
    }
    let mut out = Vec::with_capacity(n * m);
    for _ in 0..n {
        out.extend_from_slice(bias.data());
    }
    gemm_acc(input.data(), weight.data(), &mut out, n, d, m);
    Tensor::new(&[n, m], out)
}

/// Gradients of [`fully_connected`]: (input, weight, bias).
pub fn fully_connected_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let (n, d) = input.dims2("fully_connected input")?;
    let (_, m) = weight.dims2("fully_connected weight")?;
    if grad_out.dims() != [n, m] {
        return Err(Error::shape(format!(
            "fully_connected backward: grad {:?} vs [{n}, {m}]",
            grad_out.dims()
        )));
    }
    let mut gin = vec![T::zero(); n * d];
    gemm_abt_acc(grad_out.data(), weight.data(), &mut gin, n, m, d);
    let mut gw = vec![T::zero(); d * m];
    gemm_atb_acc(input.data(), grad_out.data(), &mut gw, n, d, m);
    let mut gb = vec![T::zero(); m];
    for row in grad_out.data().chunks(m) {
        for (b, &g) in gb.iter_mut().zip(row) {
            *b += g;
        }
    }
    Ok((
        Tensor::new(&[n, d], gin)?,
        Tensor::new(&[d, m], gw)?,
        Tensor::new(&[m], gb)?,
    ))
}

/// Mean over the batch of `-log softmax(logits)[label]`.
/// Returns the loss and the softmax probabilities.
pub fn softmax_cross_entropy<T: Scalar>(
    logits: &Tensor<T>,
    labels: &[usize],
) -> Result<(T, Vec<T>)> {
    let (n, k) = logits.dims2("softmax_cross_entropy")?;
    if labels.len() != n {
        return Err(Error::shape(format!(
            "softmax_cross_entropy: {} labels for logits {:?}",
            labels.len(),
            logits.dims()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::arg(format!(
            "softmax_cross_entropy: label {bad} out of range for {k} classes"
        )));
    }
    let mut probs = Vec::with_capacity(n * k);
    let mut loss = T::zero();
    for (row, &label) in logits.data().chunks(k).zip(labels) {
        let mx = row.iter().copied().fold(T::neg_infinity(), T::max);
        let z: T = row.iter().map(|&v| (v - mx).exp()).sum();
        let lse = mx + z.ln();
        loss += lse - row[label];
        probs.extend(row.iter().map(|&v| (v - lse).exp()));
    }
    Ok((loss / T::of(n as f64), probs))
}

/// `(softmax - onehot) / N`, scaled by the upstream scalar gradient.
pub fn softmax_cross_entropy_backward<T: Scalar>(
    dims: &[usize],
    probs: &[T],
    labels: &[usize],
    grad_loss: T,
) -> Tensor<T> {
    let (n, k) = (dims[0], dims[1]);
    let scale = grad_loss / T::of(n as f64);
    let mut g = probs.to_vec();
    for (row, &label) in g.chunks_mut(k).zip(labels) {
        row[label] -= T::one();
        row.iter_mut().for_each(|v| *v *= scale);
    }
    Tensor::new(dims, g).expect("same dims")
}

/// Mean squared difference over all elements.
pub fn l2_loss<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<T> {
    if pred.dims() != target.dims() {
        return Err(Error::shape(format!(
            "l2_loss: prediction {:?} vs target {:?}",
            pred.dims(),
            target.dims()
        )));
    }
    let sum: T = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| (p - t) * (p - t))
        .sum();
    Ok(sum / T::of(pred.len() as f64))
}

/// `2 (pred - target) / count`, scaled by the upstream scalar gradient.
pub fn l2_loss_backward<T: Scalar>(
    pred: &Tensor<T>,
    target: &Tensor<T>,
    grad_loss: T,
) -> Tensor<T> {
    let scale = T::of(2.0) * grad_loss / T::of(pred.len() as f64);
    let g = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| scale * (p - t))
        .collect();
    Tensor::new(pred.dims(), g).expect("same dims")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(dims: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(dims, v).unwrap()
    }

    #[test]
    fn conv_identity_kernel() {
        let out = conv2d(&t(&[1, 1, 1, 1], &[5.0]), &t(&[1, 1, 1, 1], &[1.0]), 1, 0).unwrap();
        assert_eq!(out.data(), &[5.0]);
    }

    #[test]
    fn conv_ones_receptive_field() {
        let x = Tensor::<f64>::full(&[1, 1, 3, 3], 1.0);
        let w = Tensor::<f64>::full(&[1, 1, 3, 3], 1.0);
        let out = conv2d(&x, &w, 1, 1).unwrap();
        assert_eq!(out.dims(), &[1, 1, 3, 3]);
        assert_eq!(out.data()[4], 9.0);
        for corner in [0, 2, 6, 8] {
            assert_eq!(out.data()[corner], 4.0);
        }
        assert_eq!(out.data()[1], 6.0);
    }

    #[test]
    fn conv_shape_mismatch_names_both_shapes() {
        let x = Tensor::<f32>::zeros(&[1, 2, 4, 4]);
        let w = Tensor::<f32>::zeros(&[1, 3, 3, 3]);
        let msg = alloc::format!("{}", conv2d(&x, &w, 1, 1).unwrap_err());
        assert!(
            msg.contains("[1, 2, 4, 4]") && msg.contains("[1, 3, 3, 3]"),
            "{msg}"
        );
    }

    #[test]
    fn conv_strided_extent() {
        let x = Tensor::<f32>::zeros(&[2, 3, 9, 7]);
        let w = Tensor::<f32>::zeros(&[4, 3, 3, 3]);
        let out = conv2d(&x, &w, 2, 1).unwrap();
        assert_eq!(out.dims(), &[2, 4, 5, 4]);
    }

    #[test]
    fn depthwise_identity_and_zero() {
        let x = t(&[1, 2, 2, 2], &[1.0, 2.0, 3.0, 4.0, -1.0, -2.0, -3.0, -4.0]);
        let mut w = Tensor::<f64>::zeros(&[2, 1, 3, 3]);
        w.data_mut()[4] = 1.0;
        w.data_mut()[13] = 1.0;
        assert_eq!(depthwise_conv2d(&x, &w, 1, 1).unwrap(), x);
        let z = depthwise_conv2d(&x, &Tensor::zeros(&[2, 1, 3, 3]), 1, 1).unwrap();
        assert!(z.data().iter().all(|&v| v == 0.0));
        assert!(depthwise_conv2d(&x, &Tensor::zeros(&[3, 1, 3, 3]), 1, 1).is_err());
    }

    #[test]
    fn depthwise_channels_are_independent() {
        let x = t(&[1, 2, 1, 2], &[1.0, 2.0, 100.0, 200.0]);
        let w = t(&[2, 1, 1, 1], &[2.0, 0.5]);
        let out = depthwise_conv2d(&x, &w, 1, 0).unwrap();
        assert_eq!(out.data(), &[2.0, 4.0, 50.0, 100.0]);
    }

    #[test]
    fn pointwise_cases() {
        let x = t(&[1, 2, 1, 2], &[1.0, 2.0, 3.0, 4.0]);
        let eye = t(&[2, 2, 1, 1], &[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(pointwise_conv2d(&x, &eye).unwrap(), x);
        let sum = pointwise_conv2d(&x, &t(&[1, 2, 1, 1], &[1.0, 1.0])).unwrap();
        assert_eq!(sum.data(), &[4.0, 6.0]);
        assert!(pointwise_conv2d(&x, &Tensor::zeros(&[1, 2, 3, 3])).is_err());
    }

    #[test]
    fn maxpool_cases() {
        let (out, arg) = maxpool2d(&t(&[1, 1, 2, 2], &[1.0, 2.0, 3.0, 4.0]), 2, 2).unwrap();
        assert_eq!(out.data(), &[4.0]);
        assert_eq!(arg, [3]);
        let (c, _) = maxpool2d(&Tensor::<f64>::full(&[1, 2, 4, 4], 3.5), 2, 2).unwrap();
        assert!(c.data().iter().all(|&v| v == 3.5));
        assert!(maxpool2d(&Tensor::<f64>::zeros(&[1, 1, 2, 2]), 3, 1).is_err());
    }

    #[test]
    fn maxpool_ties_route_to_first() {
        let x = t(&[1, 1, 2, 2], &[1.0, 1.0, 1.0, 1.0]);
        let (_, arg) = maxpool2d(&x, 2, 2).unwrap();
        let g = maxpool2d_backward(x.dims(), &arg, &t(&[1, 1, 1, 1], &[1.0]));
        assert_eq!(g.data(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn maxpool_256_to_32() {
        let x = Tensor::<f32>::zeros(&[1, 10, 256, 256]);
        let (out, _) = maxpool2d(&x, 8, 8).unwrap();
        assert_eq!(out.dims(), &[1, 10, 32, 32]);
    }

    #[test]
    fn instance_norm_cases() {
        let (c, _) = instance_norm(&Tensor::<f64>::full(&[1, 1, 2, 2], 7.0), 1e-5).unwrap();
        assert!(c.data().iter().all(|v| v.abs() < 1e-3));
        let (o, _) = instance_norm(&t(&[1, 1, 1, 2], &[-1.0, 1.0]), 1e-5).unwrap();
        assert!((o.data()[0] + 1.0).abs() < 1e-4 && (o.data()[1] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn layer_norm_cases() {
        let (c, _) = layer_norm(&Tensor::<f64>::full(&[2, 3, 2, 2], -4.0), 1e-5).unwrap();
        assert!(c.data().iter().all(|&v| v == 0.0));
        let (o, _) = layer_norm(&t(&[1, 2, 1, 1], &[-3.0, 3.0]), 1e-5).unwrap();
        assert!((o.data()[0] + 1.0).abs() < 1e-5 && (o.data()[1] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn relu_cases() {
        assert_eq!(relu(&t(&[3], &[-1.0, 0.0, 2.0])).data(), &[0.0, 0.0, 2.0]);
        let x = t(&[3], &[0.0, 1.0, 3.0]);
        assert_eq!(relu(&x), x);
    }

    #[test]
    fn fully_connected_cases() {
        let x = t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let eye = t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(fully_connected(&x, &eye, &Tensor::zeros(&[2])).unwrap(), x);
        let b = t(&[3], &[0.5, -1.0, 2.0]);
        let out = fully_connected(&x, &Tensor::zeros(&[2, 3]), &b).unwrap();
        assert_eq!(out.data(), &[0.5, -1.0, 2.0, 0.5, -1.0, 2.0]);
        assert!(fully_connected(&x, &Tensor::zeros(&[3, 3]), &b).is_err());
    }

    #[test]
    fn cross_entropy_cases() {
        let (l, _) = softmax_cross_entropy(&t(&[1, 2], &[0.0, 0.0]), &[1]).unwrap();
        assert!((l - core::f64::consts::LN_2).abs() < 1e-12);
        let (l, _) = softmax_cross_entropy(&t(&[1, 2], &[100.0, 0.0]), &[0]).unwrap();
        assert!(l < 1e-6);
        assert!(softmax_cross_entropy(&t(&[1, 2], &[0.0, 0.0]), &[2]).is_err());
    }

    #[test]
    fn l2_cases() {
        let a = Tensor::<f64>::full(&[32, 32], 1.0);
        assert_eq!(l2_loss(&a, &a).unwrap(), 0.0);
        assert_eq!(l2_loss(&a, &Tensor::zeros(&[32, 32])).unwrap(), 1.0);
        assert!(l2_loss(&a, &Tensor::zeros(&[32, 31])).is_err());
    }
}
