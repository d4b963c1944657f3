//! Shape rules, forward evaluation and vector-Jacobian products for the
//! primitive set. Everything here computes in f64; precision policy is
//! applied by the tape.

use super::tape::{BroadcastKind, Primitive};
use super::Tensor;
use crate::{Error, Result};

pub(super) fn forward(prim: &Primitive, inputs: &[&Tensor]) -> Result<Tensor> {
    match prim {
        Primitive::Conv2d { stride } => conv2d_forward(inputs[0], inputs[1], *stride),
        Primitive::MatMul => matmul_forward(inputs[0], inputs[1]),
        Primitive::Add => broadcast_zip(inputs[0], inputs[1], "add", |a, b| a + b),
        Primitive::Mul => broadcast_zip(inputs[0], inputs[1], "multiply", |a, b| a * b),
        Primitive::Tanh => Ok(map_unary(inputs[0], f64::tanh)),
        Primitive::Sigmoid => Ok(map_unary(inputs[0], sigmoid)),
        Primitive::Relu => Ok(map_unary(inputs[0], |v| v.max(0.0))),
        Primitive::Abs => Ok(map_unary(inputs[0], f64::abs)),
        Primitive::Softmax { axis } => softmax_forward(inputs[0], *axis),
        Primitive::ReduceSum { axis } => reduce_sum_forward(inputs[0], *axis),
        Primitive::Reshape { shape } => reshape_forward(inputs[0], shape),
        Primitive::Concat { axis } => concat_forward(inputs[0], inputs[1], *axis),
        Primitive::Slice { axis, start, len } => slice_forward(inputs[0], *axis, *start, *len),
        Primitive::Dropout { keep, mask } => dropout_forward(inputs[0], *keep, mask),
    }
}

/// One gradient tensor per input, given the upstream gradient.
pub(super) fn vjp(
    prim: &Primitive,
    inputs: &[&Tensor],
    output: &Tensor,
    grad: &Tensor,
) -> Result<Vec<Tensor>> {
    match prim {
        Primitive::Conv2d { stride } => conv2d_vjp(inputs[0], inputs[1], grad, *stride),
        Primitive::MatMul => matmul_vjp(inputs[0], inputs[1], grad),
        Primitive::Add => add_vjp(inputs[0], inputs[1], grad),
        Primitive::Mul => mul_vjp(inputs[0], inputs[1], grad),
        Primitive::Tanh => Ok(vec![zip_with(grad, output, |g, y| g * (1.0 - y * y))]),
        Primitive::Sigmoid => Ok(vec![zip_with(grad, output, |g, y| g * y * (1.0 - y))]),
        Primitive::Relu => Ok(vec![zip_with(grad, inputs[0], |g, x| {
            if x > 0.0 {
                g
            } else {
                0.0
            }
        })]),
        // Subgradient 0 at exactly 0.
        Primitive::Abs => Ok(vec![zip_with(grad, inputs[0], |g, x| {
            if x > 0.0 {
                g
            } else if x < 0.0 {
                -g
            } else {
                0.0
            }
        })]),
        Primitive::Softmax { axis } => softmax_vjp(output, grad, *axis),
        Primitive::ReduceSum { axis } => reduce_sum_vjp(inputs[0], grad, *axis),
        Primitive::Reshape { .. } => Ok(vec![Tensor {
            shape: inputs[0].shape.clone(),
            data: grad.data.clone(),
        }]),
        Primitive::Concat { axis } => concat_vjp(inputs[0], inputs[1], grad, *axis),
        Primitive::Slice { axis, start, len } => {
            slice_vjp(inputs[0], grad, *axis, *start, *len)
        }
        Primitive::Dropout { keep, mask } => dropout_forward(grad, *keep, mask).map(|t| vec![t]),
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn map_unary(t: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    Tensor {
        shape: t.shape.clone(),
        data: t.data.iter().map(|&v| f(v)).collect(),
    }
}

fn zip_with(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    debug_assert_eq!(a.len(), b.len());
    Tensor {
        shape: a.shape.clone(),
        data: a
            .data
            .iter()
            .zip(&b.data)
            .map(|(&x, &y)| f(x, y))
            .collect(),
    }
}

// ---------------------------------------------------------------------------
// add / multiply with limited broadcasting

/// Broadcast forms accepted by add/multiply: identical shapes, a one-element
/// rhs, or a rank-1 rhs matching the last axis of the lhs.
pub(super) fn broadcast_kind(lhs: &[usize], rhs: &[usize]) -> Option<BroadcastKind> {
    if lhs == rhs {
        return Some(BroadcastKind::Same);
    }
    let rhs_len: usize = rhs.iter().product();
    if rhs_len == 1 {
        return Some(BroadcastKind::Scalar);
    }
    if rhs.len() == 1 && !lhs.is_empty() && rhs[0] == *lhs.last().unwrap() {
        return Some(BroadcastKind::LastAxis);
    }
    None
}

fn broadcast_zip(
    a: &Tensor,
    b: &Tensor,
    op: &'static str,
    f: impl Fn(f64, f64) -> f64,
) -> Result<Tensor> {
    let kind = broadcast_kind(&a.shape, &b.shape).ok_or(Error::ShapeMismatch {
        op,
        lhs: a.shape.clone(),
        rhs: b.shape.clone(),
    })?;
    let mut data = Vec::with_capacity(a.len());
    match kind {
        BroadcastKind::Same => {
            data.extend(a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)));
        }
        BroadcastKind::Scalar => {
            let s = b.data[0];
            data.extend(a.data.iter().map(|&x| f(x, s)));
        }
        BroadcastKind::LastAxis => {
            let n = b.len();
            for (i, &x) in a.data.iter().enumerate() {
                data.push(f(x, b.data[i % n]));
            }
        }
    }
    Ok(Tensor {
        shape: a.shape.clone(),
        data,
    })
}

/// Sums `grad` down to the rhs broadcast shape.
fn reduce_to_rhs(rhs: &Tensor, grad: &Tensor, kind: BroadcastKind) -> Tensor {
    match kind {
        BroadcastKind::Same => Tensor {
            shape: rhs.shape.clone(),
            data: grad.data.clone(),
        },
        BroadcastKind::Scalar => {
            let s: f64 = grad.data.iter().sum();
            Tensor {
                shape: rhs.shape.clone(),
                data: vec![s],
            }
        }
        BroadcastKind::LastAxis => {
            let n = rhs.len();
            let mut out = vec![0.0; n];
            for (i, &g) in grad.data.iter().enumerate() {
                out[i % n] += g;
            }
            Tensor {
                shape: rhs.shape.clone(),
                data: out,
            }
        }
    }
}

fn add_vjp(a: &Tensor, b: &Tensor, grad: &Tensor) -> Result<Vec<Tensor>> {
    let kind = broadcast_kind(&a.shape, &b.shape).expect("checked at forward");
    let ga = Tensor {
        shape: a.shape.clone(),
        data: grad.data.clone(),
    };
    Ok(vec![ga, reduce_to_rhs(b, grad, kind)])
}

fn mul_vjp(a: &Tensor, b: &Tensor, grad: &Tensor) -> Result<Vec<Tensor>> {
    let kind = broadcast_kind(&a.shape, &b.shape).expect("checked at forward");
    let ga = match kind {
        BroadcastKind::Same => zip_with(grad, b, |g, y| g * y),
        BroadcastKind::Scalar => map_unary(grad, |g| g * b.data[0]),
        BroadcastKind::LastAxis => {
            let n = b.len();
            Tensor {
                shape: a.shape.clone(),
                data: grad
                    .data
                    .iter()
                    .enumerate()
                    .map(|(i, &g)| g * b.data[i % n])
                    .collect(),
            }
        }
    };
    let gxa = zip_with(grad, a, |g, x| g * x);
    Ok(vec![ga, reduce_to_rhs(b, &gxa, kind)])
}

// ---------------------------------------------------------------------------
// matmul

/// Accepted ranks: [m,k]x[k,n] -> [m,n]; [m,k]x[k] -> [m]; [k]x[k,n] -> [n].
fn matmul_dims(a: &Tensor, b: &Tensor) -> Result<(usize, usize, usize, Vec<usize>)> {
    let err = || Error::ShapeMismatch {
        op: "matmul",
        lhs: a.shape.clone(),
        rhs: b.shape.clone(),
    };
    match (a.rank(), b.rank()) {
        (2, 2) => {
            let (m, k) = (a.shape[0], a.shape[1]);
            let (k2, n) = (b.shape[0], b.shape[1]);
            if k != k2 {
                return Err(err());
            }
            Ok((m, k, n, vec![m, n]))
        }
        (2, 1) => {
            let (m, k) = (a.shape[0], a.shape[1]);
            if b.shape[0] != k {
                return Err(err());
            }
            Ok((m, k, 1, vec![m]))
        }
        (1, 2) => {
            let k = a.shape[0];
            if b.shape[0] != k {
                return Err(err());
            }
            let n = b.shape[1];
            Ok((1, k, n, vec![n]))
        }
        _ => Err(err()),
    }
}

fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for j in 0..n {
                crow[j] += av * brow[j];
            }
        }
    }
    c
}

/// a[m,k] @ b[n,k]^T -> [m,n]; used by the backward pass.
fn matmul_bt(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            let mut s = 0.0;
            for p in 0..k {
                s += arow[p] * brow[p];
            }
            c[i * n + j] = s;
        }
    }
    c
}

/// a[k,m]^T @ b[k,n] -> [m,n]; used by the backward pass.
fn matmul_at(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for p in 0..k {
        let arow = &a[p * m..(p + 1) * m];
        let brow = &b[p * n..(p + 1) * n];
        for i in 0..m {
            let av = arow[i];
            if av == 0.0 {
                continue;
            }
            let crow = &mut c[i * n..(i + 1) * n];
            for j in 0..n {
                crow[j] += av * brow[j];
            }
        }
    }
    c
}

fn matmul_forward(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k, n, out_shape) = matmul_dims(a, b)?;
    Ok(Tensor {
        shape: out_shape,
        data: matmul_raw(&a.data, &b.data, m, k, n),
    })
}

fn matmul_vjp(a: &Tensor, b: &Tensor, grad: &Tensor) -> Result<Vec<Tensor>> {
    let (m, k, n, _) = matmul_dims(a, b)?;
    // ga = g @ b^T, gb = a^T @ g, on the 2-D views.
    let ga = matmul_bt(&grad.data, &b.data, m, n, k);
    let gb = matmul_at(&a.data, &grad.data, k, m, n);
    Ok(vec![
        Tensor {
            shape: a.shape.clone(),
            data: ga,
        },
        Tensor {
            shape: b.shape.clone(),
            data: gb,
        },
    ])
}

// ---------------------------------------------------------------------------
// conv2d: cross-correlation, zero "same" padding, HWC input, KKIO kernel

pub(super) fn conv2d_out_shape(
    input: &[usize],
    kernel: &[usize],
    stride: usize,
) -> Result<(Vec<usize>, usize, usize)> {
    let bad = || Error::ShapeMismatch {
        op: "conv2d",
        lhs: input.to_vec(),
        rhs: kernel.to_vec(),
    };
    if input.len() != 3 || kernel.len() != 4 || stride == 0 || input[2] != kernel[2] {
        return Err(bad());
    }
    let (h, w) = (input[0], input[1]);
    let (kh, kw, _, co) = (kernel[0], kernel[1], kernel[2], kernel[3]);
    let oh = h.div_ceil(stride);
    let ow = w.div_ceil(stride);
    let pad_h = ((oh - 1) * stride + kh).saturating_sub(h);
    let pad_w = ((ow - 1) * stride + kw).saturating_sub(w);
    // Same padding splits the deficit with the smaller half on the leading edge.
    Ok((vec![oh, ow, co], pad_h / 2, pad_w / 2))
}

/// Valid kernel-offset range along one axis for an output position, so the
/// inner loops run branch-free.
#[inline]
fn kernel_range(o: usize, stride: usize, pad: usize, k: usize, extent: usize) -> (usize, usize) {
    let i0 = (o * stride) as isize - pad as isize;
    let lo = (-i0).max(0) as usize;
    let hi = (extent as isize - i0).min(k as isize).max(0) as usize;
    (lo, hi)
}

fn conv2d_forward(input: &Tensor, kernel: &Tensor, stride: usize) -> Result<Tensor> {
    let (out_shape, pad_top, pad_left) = conv2d_out_shape(&input.shape, &kernel.shape, stride)?;
    let (h, w, ci) = (input.shape[0], input.shape[1], input.shape[2]);
    let (kh, kw, _, co) = (
        kernel.shape[0],
        kernel.shape[1],
        kernel.shape[2],
        kernel.shape[3],
    );
    let (oh, ow) = (out_shape[0], out_shape[1]);
    let mut out = vec![0.0; oh * ow * co];
    let idata = &input.data;
    let kdata = &kernel.data;
    let mut acc = vec![0.0; co];
    for oy in 0..oh {
        let iy0 = (oy * stride) as isize - pad_top as isize;
        let (ky_lo, ky_hi) = kernel_range(oy, stride, pad_top, kh, h);
        for ox in 0..ow {
            let ix0 = (ox * stride) as isize - pad_left as isize;
            let (kx_lo, kx_hi) = kernel_range(ox, stride, pad_left, kw, w);
            acc.iter_mut().for_each(|v| *v = 0.0);
            for ky in ky_lo..ky_hi {
                let iy = (iy0 + ky as isize) as usize;
                for kx in kx_lo..kx_hi {
                    let ix = (ix0 + kx as isize) as usize;
                    let ibase = (iy * w + ix) * ci;
                    let kbase = ((ky * kw) + kx) * ci * co;
                    let ivals = &idata[ibase..ibase + ci];
                    for (c_in, &iv) in ivals.iter().enumerate() {
                        let krow = &kdata[kbase + c_in * co..kbase + (c_in + 1) * co];
                        for (a, &kv) in acc.iter_mut().zip(krow) {
                            *a += iv * kv;
                        }
                    }
                }
            }
            let obase = ((oy * ow) + ox) * co;
            out[obase..obase + co].copy_from_slice(&acc);
        }
    }
    Ok(Tensor {
        shape: out_shape,
        data: out,
    })
}

fn conv2d_vjp(input: &Tensor, kernel: &Tensor, grad: &Tensor, stride: usize) -> Result<Vec<Tensor>> {
    let (out_shape, pad_top, pad_left) = conv2d_out_shape(&input.shape, &kernel.shape, stride)?;
    let (h, w, ci) = (input.shape[0], input.shape[1], input.shape[2]);
    let (kh, kw, _, co) = (
        kernel.shape[0],
        kernel.shape[1],
        kernel.shape[2],
        kernel.shape[3],
    );
    let (oh, ow) = (out_shape[0], out_shape[1]);
    let mut gi = vec![0.0; input.len()];
    let mut gk = vec![0.0; kernel.len()];
    let idata = &input.data;
    let kdata = &kernel.data;
    for oy in 0..oh {
        let iy0 = (oy * stride) as isize - pad_top as isize;
        let (ky_lo, ky_hi) = kernel_range(oy, stride, pad_top, kh, h);
        for ox in 0..ow {
            let ix0 = (ox * stride) as isize - pad_left as isize;
            let (kx_lo, kx_hi) = kernel_range(ox, stride, pad_left, kw, w);
            let grow = &grad.data[((oy * ow) + ox) * co..((oy * ow) + ox + 1) * co];
            for ky in ky_lo..ky_hi {
                let iy = (iy0 + ky as isize) as usize;
                for kx in kx_lo..kx_hi {
                    let ix = (ix0 + kx as isize) as usize;
                    let ibase = (iy * w + ix) * ci;
                    let kbase = ((ky * kw) + kx) * ci * co;
                    for c_in in 0..ci {
                        let iv = idata[ibase + c_in];
                        let koff = kbase + c_in * co;
                        let grow_k = &mut gk[koff..koff + co];
                        let krow = &kdata[koff..koff + co];
                        let mut acc = 0.0;
                        for ((gkv, &kv), &g) in grow_k.iter_mut().zip(krow).zip(grow) {
                            *gkv += iv * g;
                            acc += kv * g;
                        }
                        gi[ibase + c_in] += acc;
                    }
                }
            }
        }
    }
    Ok(vec![
        Tensor {
            shape: input.shape.clone(),
            data: gi,
        },
        Tensor {
            shape: kernel.shape.clone(),
            data: gk,
        },
    ])
}

// ---------------------------------------------------------------------------
// softmax / reductions / shape ops

fn split_at_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer: usize = shape[..axis].iter().product();
    let n = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    (outer, n, inner)
}

fn softmax_forward(x: &Tensor, axis: usize) -> Result<Tensor> {
    if axis >= x.rank().max(1) || x.rank() == 0 {
        return Err(Error::invalid(format!(
            "softmax axis {axis} out of rank {} tensor",
            x.rank()
        )));
    }
    let (outer, n, inner) = split_at_axis(&x.shape, axis);
    let mut out = vec![0.0; x.len()];
    for o in 0..outer {
        for i in 0..inner {
            let base = o * n * inner + i;
            // max-subtraction keeps the exponentials bounded
            let mut m = f64::NEG_INFINITY;
            for j in 0..n {
                m = m.max(x.data[base + j * inner]);
            }
            let mut z = 0.0;
            for j in 0..n {
                let e = (x.data[base + j * inner] - m).exp();
                out[base + j * inner] = e;
                z += e;
            }
            for j in 0..n {
                out[base + j * inner] /= z;
            }
        }
    }
    Ok(Tensor {
        shape: x.shape.clone(),
        data: out,
    })
}

fn softmax_vjp(output: &Tensor, grad: &Tensor, axis: usize) -> Result<Vec<Tensor>> {
    let (outer, n, inner) = split_at_axis(&output.shape, axis);
    let mut gi = vec![0.0; output.len()];
    for o in 0..outer {
        for i in 0..inner {
            let base = o * n * inner + i;
            let mut dot = 0.0;
            for j in 0..n {
                let idx = base + j * inner;
                dot += grad.data[idx] * output.data[idx];
            }
            for j in 0..n {
                let idx = base + j * inner;
                gi[idx] = output.data[idx] * (grad.data[idx] - dot);
            }
        }
    }
    Ok(vec![Tensor {
        shape: output.shape.clone(),
        data: gi,
    }])
}

fn reduce_sum_forward(x: &Tensor, axis: Option<usize>) -> Result<Tensor> {
    match axis {
        None => Ok(Tensor::scalar(x.data.iter().sum())),
        Some(a) => {
            if a >= x.rank() {
                return Err(Error::invalid(format!(
                    "reduce-sum axis {a} out of rank {}",
                    x.rank()
                )));
            }
            let (outer, n, inner) = split_at_axis(&x.shape, a);
            let mut shape = x.shape.clone();
            shape.remove(a);
            let mut out = vec![0.0; outer * inner];
            for o in 0..outer {
                for j in 0..n {
                    let base = o * n * inner + j * inner;
                    let obase = o * inner;
                    for i in 0..inner {
                        out[obase + i] += x.data[base + i];
                    }
                }
            }
            Ok(Tensor { shape, data: out })
        }
    }
}

fn reduce_sum_vjp(input: &Tensor, grad: &Tensor, axis: Option<usize>) -> Result<Vec<Tensor>> {
    let mut gi = vec![0.0; input.len()];
    match axis {
        None => {
            let g = grad.data[0];
            gi.iter_mut().for_each(|v| *v = g);
        }
        Some(a) => {
            let (outer, n, inner) = split_at_axis(&input.shape, a);
            for o in 0..outer {
                for j in 0..n {
                    let base = o * n * inner + j * inner;
                    let gbase = o * inner;
                    for i in 0..inner {
                        gi[base + i] = grad.data[gbase + i];
                    }
                }
            }
        }
    }
    Ok(vec![Tensor {
        shape: input.shape.clone(),
        data: gi,
    }])
}

fn reshape_forward(x: &Tensor, shape: &[usize]) -> Result<Tensor> {
    let n: usize = shape.iter().product();
    if n != x.len() {
        return Err(Error::ShapeMismatch {
            op: "reshape",
            lhs: x.shape.clone(),
            rhs: shape.to_vec(),
        });
    }
    Ok(Tensor {
        shape: shape.to_vec(),
        data: x.data.clone(),
    })
}

fn concat_forward(a: &Tensor, b: &Tensor, axis: usize) -> Result<Tensor> {
    let bad = || Error::ShapeMismatch {
        op: "concat",
        lhs: a.shape.clone(),
        rhs: b.shape.clone(),
    };
    if a.rank() != b.rank() || axis >= a.rank() {
        return Err(bad());
    }
    for (i, (&ea, &eb)) in a.shape.iter().zip(&b.shape).enumerate() {
        if i != axis && ea != eb {
            return Err(bad());
        }
    }
    let (outer, na, inner) = split_at_axis(&a.shape, axis);
    let nb = b.shape[axis];
    let mut shape = a.shape.clone();
    shape[axis] = na + nb;
    let mut out = Vec::with_capacity(a.len() + b.len());
    for o in 0..outer {
        out.extend_from_slice(&a.data[o * na * inner..(o + 1) * na * inner]);
        out.extend_from_slice(&b.data[o * nb * inner..(o + 1) * nb * inner]);
    }
    Ok(Tensor { shape, data: out })
}

fn concat_vjp(a: &Tensor, b: &Tensor, grad: &Tensor, axis: usize) -> Result<Vec<Tensor>> {
    let (outer, na, inner) = split_at_axis(&a.shape, axis);
    let nb = b.shape[axis];
    let mut ga = Vec::with_capacity(a.len());
    let mut gb = Vec::with_capacity(b.len());
    let row = (na + nb) * inner;
    for o in 0..outer {
        let base = o * row;
        ga.extend_from_slice(&grad.data[base..base + na * inner]);
        gb.extend_from_slice(&grad.data[base + na * inner..base + row]);
    }
    Ok(vec![
        Tensor {
            shape: a.shape.clone(),
            data: ga,
        },
        Tensor {
            shape: b.shape.clone(),
            data: gb,
        },
    ])
}

fn slice_forward(x: &Tensor, axis: usize, start: usize, len: usize) -> Result<Tensor> {
    if axis >= x.rank() || start + len > x.shape[axis] || len == 0 {
        return Err(Error::invalid(format!(
            "slice [{start}..{}] on axis {axis} of shape {:?}",
            start + len,
            x.shape
        )));
    }
    let (outer, n, inner) = split_at_axis(&x.shape, axis);
    let mut shape = x.shape.clone();
    shape[axis] = len;
    let mut out = Vec::with_capacity(outer * len * inner);
    for o in 0..outer {
        let base = o * n * inner + start * inner;
        out.extend_from_slice(&x.data[base..base + len * inner]);
    }
    Ok(Tensor { shape, data: out })
}

fn slice_vjp(
    input: &Tensor,
    grad: &Tensor,
    axis: usize,
    start: usize,
    len: usize,
) -> Result<Vec<Tensor>> {
    let (outer, n, inner) = split_at_axis(&input.shape, axis);
    let mut gi = vec![0.0; input.len()];
    for o in 0..outer {
        let base = o * n * inner + start * inner;
        let gbase = o * len * inner;
        gi[base..base + len * inner].copy_from_slice(&grad.data[gbase..gbase + len * inner]);
    }
    Ok(vec![Tensor {
        shape: input.shape.clone(),
        data: gi,
    }])
}

fn dropout_forward(x: &Tensor, keep: f64, mask: &[f64]) -> Result<Tensor> {
    if mask.len() != x.len() {
        return Err(Error::ShapeMismatch {
            op: "dropout",
            lhs: x.shape.clone(),
            rhs: vec![mask.len()],
        });
    }
    if !(keep > 0.0 && keep <= 1.0) {
        return Err(Error::invalid(format!("dropout keep probability {keep}")));
    }
    // Inverted dropout: scale at train time so inference needs no rescaling.
    let inv = 1.0 / keep;
    Ok(Tensor {
        shape: x.shape.clone(),
        data: x
            .data
            .iter()
            .zip(mask)
            .map(|(&v, &m)| v * m * inv)
            .collect(),
    })
}
