//! Layer primitives over NHWC batches.
//!
//! Convolution filters are laid out `f x f x C x M` and biases `M`. SAME
//! padding puts the extra row/column of an odd padding on the bottom/right.

use super::spec::{ConvType, PoolType};
use super::tensor::{Real, Tensor};
use crate::{Error, Result};

/// Output length and leading padding along one spatial axis.
pub fn conv_geometry(n: usize, f: usize, stride: usize, mode: ConvType) -> Option<(usize, usize)> {
    if stride == 0 || f == 0 {
        return None;
    }
    match mode {
        ConvType::Valid => n.checked_sub(f).map(|d| (d / stride + 1, 0)),
        ConvType::Same => {
            let out = n.div_ceil(stride);
            let total = ((out - 1) * stride + f).saturating_sub(n);
            Some((out, total / 2))
        }
    }
}

fn dims4<T: Real>(t: &Tensor<T>) -> Result<[usize; 4]> {
    match *t.shape() {
        [n, h, w, c] => Ok([n, h, w, c]),
        [h, w, c] => Ok([1, h, w, c]),
        ref s => Err(Error::Shape(format!("expected NHWC or HWC, got {s:?}"))),
    }
}

/// Convolution of an `H x W x C` image (or `N x H x W x C` batch) with
/// `f x f x C x M` filters. Each output cell is the bias plus the sum over
/// channels of the elementwise products under the window.
pub fn conv_forward<T: Real>(
    input: &Tensor<T>,
    filters: &Tensor<T>,
    bias: &[T],
    stride: usize,
    mode: ConvType,
) -> Result<Tensor<T>> {
    let [n, h, w, c] = dims4(input)?;
    let [f, f2, fc, m] = match *filters.shape() {
        [a, b, c, d] => [a, b, c, d],
        ref s => return Err(Error::Shape(format!("filters must be 4-d, got {s:?}"))),
    };
    if f != f2 {
        return Err(Error::Shape("filters must be square".into()));
    }
    if fc != c {
        return Err(Error::Shape(format!(
            "input has {c} channels, filters expect {fc}"
        )));
    }
    if bias.len() != m {
        return Err(Error::Shape(format!("{} biases for {m} feature maps", bias.len())));
    }
    let (oh, pt) = conv_geometry(h, f, stride, mode)
        .ok_or_else(|| Error::Shape(format!("filter {f} does not fit height {h}")))?;
    let (ow, pl) = conv_geometry(w, f, stride, mode)
        .ok_or_else(|| Error::Shape(format!("filter {f} does not fit width {w}")))?;
    let mut out = vec![T::zero(); n * oh * ow * m];
    conv_forward_raw(
        input.data(),
        [n, h, w, c],
        filters.data(),
        bias,
        f,
        stride,
        (pt, pl),
        [oh, ow, m],
        &mut out,
    );
    let shape = if input.shape().len() == 3 {
        vec![oh, ow, m]
    } else {
        vec![n, oh, ow, m]
    };
    Tensor::new(shape, out)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_forward_raw<T: Real>(
    input: &[T],
    [n, h, w, c]: [usize; 4],
    filters: &[T],
    bias: &[T],
    f: usize,
    stride: usize,
    (pt, pl): (usize, usize),
    [oh, ow, m]: [usize; 3],
    out: &mut [T],
) {
    for b in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                let o = ((b * oh + oy) * ow + ox) * m;
                let px = &mut out[o..o + m];
                px.copy_from_slice(bias);
                for ky in 0..f {
                    let Some(iy) = (oy * stride + ky).checked_sub(pt).filter(|&y| y < h) else {
                        continue;
                    };
                    for kx in 0..f {
                        let Some(ix) = (ox * stride + kx).checked_sub(pl).filter(|&x| x < w)
                        else {
                            continue;
                        };
                        let i = ((b * h + iy) * w + ix) * c;
                        let wbase = (ky * f + kx) * c * m;
                        for (ci, &v) in input[i..i + c].iter().enumerate() {
                            if v == T::zero() {
                                continue;
                            }
                            let row = &filters[wbase + ci * m..wbase + (ci + 1) * m];
                            for (acc, &wv) in px.iter_mut().zip(row) {
                                *acc = *acc + v * wv;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Accumulates filter, bias and input gradients of a convolution.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_backward_raw<T: Real>(
    input: &[T],
    [n, h, w, c]: [usize; 4],
    filters: &[T],
    f: usize,
    stride: usize,
    (pt, pl): (usize, usize),
    [oh, ow, m]: [usize; 3],
    grad_out: &[T],
    grad_filters: &mut [T],
    grad_bias: &mut [T],
    mut grad_input: Option<&mut [T]>,
) {
    for b in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                let o = ((b * oh + oy) * ow + ox) * m;
                let g = &grad_out[o..o + m];
                if g.iter().all(|v| *v == T::zero()) {
                    continue;
                }
                for (gb, &gv) in grad_bias.iter_mut().zip(g) {
                    *gb = *gb + gv;
                }
                for ky in 0..f {
                    let Some(iy) = (oy * stride + ky).checked_sub(pt).filter(|&y| y < h) else {
                        continue;
                    };
                    for kx in 0..f {
                        let Some(ix) = (ox * stride + kx).checked_sub(pl).filter(|&x| x < w)
                        else {
                            continue;
                        };
                        let i = ((b * h + iy) * w + ix) * c;
                        let wbase = (ky * f + kx) * c * m;
                        for ci in 0..c {
                            let v = input[i + ci];
                            let r = wbase + ci * m..wbase + (ci + 1) * m;
                            if v != T::zero() {
                                for (gw, &gv) in grad_filters[r.clone()].iter_mut().zip(g) {
                                    *gw = *gw + v * gv;
                                }
                            }
                            if let Some(gi) = grad_input.as_deref_mut() {
                                let dot: T = filters[r].iter().zip(g).map(|(&a, &b)| a * b).sum();
                                gi[i + ci] = gi[i + ci] + dot;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Max or average pooling with a square window; channels are independent.
pub fn pool_forward<T: Real>(
    input: &Tensor<T>,
    kernel: usize,
    stride: usize,
    kind: PoolType,
) -> Result<Tensor<T>> {
    let [n, h, w, c] = dims4(input)?;
    if kernel == 0 || stride == 0 || kernel > h || kernel > w {
        return Err(Error::Shape(format!(
            "pool kernel {kernel} (stride {stride}) does not fit {h}x{w}"
        )));
    }
    let (oh, ow) = ((h - kernel) / stride + 1, (w - kernel) / stride + 1);
    let mut out = vec![T::zero(); n * oh * ow * c];
    pool_forward_raw(input.data(), [n, h, w, c], kernel, stride, [oh, ow], kind, &mut out, None);
    let shape = if input.shape().len() == 3 {
        vec![oh, ow, c]
    } else {
        vec![n, oh, ow, c]
    };
    Tensor::new(shape, out)
}

/// `argmax`, when given, receives the flat input index of each max-pool winner.
#[allow(clippy::too_many_arguments)]
pub(crate) fn pool_forward_raw<T: Real>(
    input: &[T],
    [n, h, w, c]: [usize; 4],
    k: usize,
    stride: usize,
    [oh, ow]: [usize; 2],
    kind: PoolType,
    out: &mut [T],
    mut argmax: Option<&mut [usize]>,
) {
    let area = T::of((k * k) as f64);
    for b in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                for ch in 0..c {
                    let o = ((b * oh + oy) * ow + ox) * c + ch;
                    let mut best = T::neg_infinity();
                    let mut best_at = 0;
                    let mut sum = T::zero();
                    for ky in 0..k {
                        for kx in 0..k {
                            let i = ((b * h + oy * stride + ky) * w + ox * stride + kx) * c + ch;
                            let v = input[i];
                            sum = sum + v;
                            if v > best {
                                best = v;
                                best_at = i;
                            }
                        }
                    }
                    out[o] = match kind {
                        PoolType::Max => best,
                        PoolType::Avg => sum / area,
                    };
                    if let Some(a) = argmax.as_deref_mut() {
                        a[o] = best_at;
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn pool_backward_raw<T: Real>(
    [n, h, w, c]: [usize; 4],
    k: usize,
    stride: usize,
    [oh, ow]: [usize; 2],
    kind: PoolType,
    argmax: &[usize],
    grad_out: &[T],
    grad_input: &mut [T],
) {
    let area = T::of((k * k) as f64);
    for b in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                for ch in 0..c {
                    let o = ((b * oh + oy) * ow + ox) * c + ch;
                    let g = grad_out[o];
                    match kind {
                        PoolType::Max => grad_input[argmax[o]] = grad_input[argmax[o]] + g,
                        PoolType::Avg => {
                            let share = g / area;
                            for ky in 0..k {
                                for kx in 0..k {
                                    let i = ((b * h + oy * stride + ky) * w + ox * stride + kx) * c
                                        + ch;
                                    grad_input[i] = grad_input[i] + share;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

/// `out[b] = x[b] . W + bias` with `W` laid out `inputs x outputs`.
pub(crate) fn dense_forward_raw<T: Real>(
    x: &[T],
    n: usize,
    inputs: usize,
    weights: &[T],
    bias: &[T],
    out: &mut [T],
) {
    let outputs = bias.len();
    for b in 0..n {
        let row = &mut out[b * outputs..(b + 1) * outputs];
        row.copy_from_slice(bias);
        for (i, &v) in x[b * inputs..(b + 1) * inputs].iter().enumerate() {
            if v == T::zero() {
                continue;
            }
            for (acc, &wv) in row.iter_mut().zip(&weights[i * outputs..(i + 1) * outputs]) {
                *acc = *acc + v * wv;
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn dense_backward_raw<T: Real>(
    x: &[T],
    n: usize,
    inputs: usize,
    weights: &[T],
    grad_out: &[T],
    grad_weights: &mut [T],
    grad_bias: &mut [T],
    mut grad_input: Option<&mut [T]>,
) {
    let outputs = grad_bias.len();
    for b in 0..n {
        let g = &grad_out[b * outputs..(b + 1) * outputs];
        for (gb, &gv) in grad_bias.iter_mut().zip(g) {
            *gb = *gb + gv;
        }
        for i in 0..inputs {
            let v = x[b * inputs + i];
            let r = i * outputs..(i + 1) * outputs;
            if v != T::zero() {
                for (gw, &gv) in grad_weights[r.clone()].iter_mut().zip(g) {
                    *gw = *gw + v * gv;
                }
            }
            if let Some(gi) = grad_input.as_deref_mut() {
                gi[b * inputs + i] = weights[r].iter().zip(g).map(|(&a, &b)| a * b).sum();
            }
        }
    }
}

/// Row-wise softmax of `n x k` logits.
pub fn softmax<T: Real>(logits: &[T], k: usize) -> Vec<T> {
    let mut out = logits.to_vec();
    for row in out.chunks_mut(k) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut total = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total = total + *v;
        }
        for v in row.iter_mut() {
            *v = *v / total;
        }
    }
    out
}

/// Mean softmax cross-entropy and its gradient with respect to the logits.
pub fn softmax_cross_entropy<T: Real>(logits: &[T], labels: &[usize], k: usize) -> (f64, Vec<T>) {
    let n = labels.len();
    let mut grad = softmax(logits, k);
    let mut loss = 0.0;
    let scale = T::of(1.0 / n as f64);
    for (b, &y) in labels.iter().enumerate() {
        let row = &mut grad[b * k..(b + 1) * k];
        // log-sum-exp form keeps the loss finite when the true-class
        // probability underflows.
        let lrow = &logits[b * k..(b + 1) * k];
        let max = lrow.iter().copied().fold(T::neg_infinity(), T::max).as_f64();
        let lse = max + lrow.iter().map(|v| (v.as_f64() - max).exp()).sum::<f64>().ln();
        loss += lse - lrow[y].as_f64();
        row[y] = row[y] - T::one();
        for v in row.iter_mut() {
            *v = *v * scale;
        }
    }
    (loss / n as f64, grad)
}

/// Index of the largest logit per row, ties toward the lowest class.
pub fn argmax_rows<T: Real>(logits: &[T], k: usize) -> Vec<usize> {
    logits
        .chunks(k)
        .map(|row| {
            let mut best = 0;
            for (i, v) in row.iter().enumerate() {
                if *v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}
