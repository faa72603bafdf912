use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use super::ops::{
    argmax_rows, conv_backward_raw, conv_forward_raw, conv_geometry, dense_backward_raw,
    dense_forward_raw, pool_backward_raw, pool_forward_raw, softmax_cross_entropy,
};
use super::spec::{Init, LayerSpec, NetworkSpec};
use super::tensor::{Real, Tensor};
use crate::{Error, Result};

/// Weights and biases of one trainable layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerParams<T> {
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

/// Parameters aligned with `NetworkSpec::layers`; `None` for pooling and
/// flatten steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightSet<T> {
    pub layers: Vec<Option<LayerParams<T>>>,
}

impl<T: Real> WeightSet<T> {
    pub fn zeros(spec: &NetworkSpec) -> Self {
        Self {
            layers: spec
                .layers
                .iter()
                .map(|l| {
                    l.param_shape().map(|(w, b)| LayerParams {
                        weights: vec![T::zero(); w],
                        bias: vec![T::zero(); b],
                    })
                })
                .collect(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.params().map(|p| p.weights.len() + p.bias.len()).sum()
    }

    fn params(&self) -> impl Iterator<Item = &LayerParams<T>> {
        self.layers.iter().flatten()
    }

    /// Every weight then bias, layer by layer.
    pub fn flat(&self) -> Vec<T> {
        self.params()
            .flat_map(|p| p.weights.iter().chain(&p.bias).copied())
            .collect()
    }

    pub fn flat_mut(&mut self) -> Vec<&mut T> {
        self.layers
            .iter_mut()
            .flatten()
            .flat_map(|p| p.weights.iter_mut().chain(p.bias.iter_mut()))
            .collect()
    }

    pub fn cast<U: Real>(&self) -> WeightSet<U> {
        WeightSet {
            layers: self
                .layers
                .iter()
                .map(|l| {
                    l.as_ref().map(|p| LayerParams {
                        weights: p.weights.iter().map(|v| U::of(v.as_f64())).collect(),
                        bias: p.bias.iter().map(|v| U::of(v.as_f64())).collect(),
                    })
                })
                .collect(),
        }
    }

    fn check(&self, spec: &NetworkSpec) -> Result<()> {
        let ok = self.layers.len() == spec.layers.len()
            && self.layers.iter().zip(&spec.layers).all(|(p, l)| {
                match (p, l.param_shape()) {
                    (None, None) => true,
                    (Some(p), Some((w, b))) => p.weights.len() == w && p.bias.len() == b,
                    _ => false,
                }
            });
        if ok {
            Ok(())
        } else {
            Err(Error::Shape("weight set does not match network".into()))
        }
    }
}

/// Draws weights per each layer's [`Init`].
pub fn init_weights<T: Real, R: Rng + ?Sized>(spec: &NetworkSpec, rng: &mut R) -> WeightSet<T> {
    let layers = spec
        .layers
        .iter()
        .map(|layer| {
            let (nw, nb) = layer.param_shape()?;
            Some(match layer.init().expect("trainable layers carry an init") {
                Init::Gaussian { mean, std } => {
                    let dist = Normal::new(mean, std).expect("std is positive and finite");
                    LayerParams {
                        weights: (0..nw).map(|_| T::of(dist.sample(rng))).collect(),
                        bias: vec![T::of(mean); nb],
                    }
                }
                Init::Xavier => {
                    let (fan_in, fan_out) = layer.fans().expect("trainable");
                    let bound = xavier_bound(fan_in, fan_out);
                    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
                    LayerParams {
                        weights: (0..nw).map(|_| T::of(dist.sample(rng))).collect(),
                        bias: vec![T::zero(); nb],
                    }
                }
            })
        })
        .collect();
    WeightSet { layers }
}

pub fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Weights drawn from each layer's evolved Gaussian statistics.
pub fn gaussian_init<T: Real, R: Rng + ?Sized>(spec: &NetworkSpec, rng: &mut R) -> Result<WeightSet<T>> {
    for layer in &spec.layers {
        match layer.init() {
            Some(Init::Gaussian { std, mean }) if std > 0.0 && std.is_finite() && mean.is_finite() => {}
            Some(_) => {
                return Err(Error::Config(
                    "gaussian init needs finite (mean, std > 0) on every layer".into(),
                ))
            }
            None => {}
        }
    }
    Ok(init_weights(spec, rng))
}

/// Xavier-uniform weights and zero biases for the same architecture.
pub fn xavier_init<T: Real, R: Rng + ?Sized>(spec: &NetworkSpec, rng: &mut R) -> WeightSet<T> {
    init_weights(&spec.with_init(Init::Xavier), rng)
}

/// Activations kept for the backward pass.
#[derive(Debug)]
pub struct Cache<T> {
    /// `activations[i]` feeds layer `i`; the last entry is the logits.
    pub activations: Vec<Vec<T>>,
    argmax: Vec<Vec<usize>>,
    batch: usize,
}

impl<T: Real> Cache<T> {
    pub fn logits(&self) -> &[T] {
        self.activations.last().expect("at least the input")
    }
}

fn batch_len<T: Real>(spec: &NetworkSpec, batch: &Tensor<T>) -> Result<usize> {
    let s = spec.input;
    match *batch.shape() {
        [n, h, w, c] if [h, w, c] == [s.height, s.width, s.channels] => Ok(n),
        ref other => Err(Error::Shape(format!(
            "batch {other:?} does not match network input {s}"
        ))),
    }
}

/// Runs the network on an `N x H x W x C` batch. Conv and hidden dense
/// layers apply ReLU; pooling and the logits layer do not.
pub fn forward<T: Real>(
    spec: &NetworkSpec,
    batch: &Tensor<T>,
    weights: &WeightSet<T>,
) -> Result<(Tensor<T>, Cache<T>)> {
    let n = batch_len(spec, batch)?;
    weights.check(spec)?;
    let mut activations = Vec::with_capacity(spec.layers.len() + 1);
    let mut argmax = Vec::new();
    activations.push(batch.data().to_vec());
    for (layer, params) in spec.layers.iter().zip(&weights.layers) {
        let x = activations.last().expect("input pushed");
        let mut y = vec![T::zero(); n * layer.output_len()];
        match layer {
            LayerSpec::Conv {
                filter,
                stride,
                padding,
                input,
                output,
                ..
            } => {
                let p = params.as_ref().expect("checked");
                let (_, pt) = conv_geometry(input.height, *filter, *stride, *padding).expect("decoded");
                let (_, pl) = conv_geometry(input.width, *filter, *stride, *padding).expect("decoded");
                conv_forward_raw(
                    x,
                    [n, input.height, input.width, input.channels],
                    &p.weights,
                    &p.bias,
                    *filter,
                    *stride,
                    (pt, pl),
                    [output.height, output.width, output.channels],
                    &mut y,
                );
                relu(&mut y);
            }
            LayerSpec::Pool {
                kernel,
                stride,
                kind,
                input,
                output,
            } => {
                let mut idx = vec![0; y.len()];
                pool_forward_raw(
                    x,
                    [n, input.height, input.width, input.channels],
                    *kernel,
                    *stride,
                    [output.height, output.width],
                    *kind,
                    &mut y,
                    Some(&mut idx),
                );
                argmax.push(idx);
            }
            LayerSpec::Flatten { .. } => y.copy_from_slice(x),
            LayerSpec::Dense {
                inputs,
                relu: act,
                ..
            } => {
                let p = params.as_ref().expect("checked");
                dense_forward_raw(x, n, *inputs, &p.weights, &p.bias, &mut y);
                if *act {
                    relu(&mut y);
                }
            }
        }
        activations.push(y);
    }
    let logits = Tensor::new(
        vec![n, spec.num_classes],
        activations.last().expect("pushed").clone(),
    )?;
    Ok((
        logits,
        Cache {
            activations,
            argmax,
            batch: n,
        },
    ))
}

fn relu<T: Real>(v: &mut [T]) {
    for x in v {
        if *x < T::zero() {
            *x = T::zero();
        }
    }
}

fn check_labels(labels: &[usize], n: usize, classes: usize) -> Result<()> {
    if labels.len() != n {
        return Err(Error::Shape(format!("{} labels for {n} samples", labels.len())));
    }
    if let Some(bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::Shape(format!("label {bad} outside [0, {classes})")));
    }
    Ok(())
}

/// Mean softmax cross-entropy of the batch and its gradient for every
/// parameter.
pub fn loss_and_gradients<T: Real>(
    spec: &NetworkSpec,
    batch: &Tensor<T>,
    labels: &[usize],
    weights: &WeightSet<T>,
) -> Result<(f64, WeightSet<T>)> {
    let (_, cache) = forward(spec, batch, weights)?;
    check_labels(labels, cache.batch, spec.num_classes)?;
    let (loss, grad_logits) = softmax_cross_entropy(cache.logits(), labels, spec.num_classes);
    let grads = backward(spec, weights, &cache, grad_logits);
    Ok((loss, grads))
}

fn backward<T: Real>(
    spec: &NetworkSpec,
    weights: &WeightSet<T>,
    cache: &Cache<T>,
    grad_logits: Vec<T>,
) -> WeightSet<T> {
    let n = cache.batch;
    let mut grads = WeightSet::zeros(spec);
    let mut grad = grad_logits;
    let mut pool_idx = cache.argmax.len();
    for (i, layer) in spec.layers.iter().enumerate().rev() {
        let x = &cache.activations[i];
        let y = &cache.activations[i + 1];
        let need_input = i > 0;
        let mut gin = if need_input {
            vec![T::zero(); x.len()]
        } else {
            Vec::new()
        };
        match layer {
            LayerSpec::Conv {
                filter,
                stride,
                padding,
                input,
                output,
                ..
            } => {
                relu_backward(&mut grad, y);
                let p = weights.layers[i].as_ref().expect("trainable");
                let g = grads.layers[i].as_mut().expect("trainable");
                let (_, pt) = conv_geometry(input.height, *filter, *stride, *padding).expect("decoded");
                let (_, pl) = conv_geometry(input.width, *filter, *stride, *padding).expect("decoded");
                conv_backward_raw(
                    x,
                    [n, input.height, input.width, input.channels],
                    &p.weights,
                    *filter,
                    *stride,
                    (pt, pl),
                    [output.height, output.width, output.channels],
                    &grad,
                    &mut g.weights,
                    &mut g.bias,
                    need_input.then_some(gin.as_mut_slice()),
                );
            }
            LayerSpec::Pool {
                kernel,
                stride,
                kind,
                input,
                output,
            } => {
                pool_idx -= 1;
                if need_input {
                    pool_backward_raw(
                        [n, input.height, input.width, input.channels],
                        *kernel,
                        *stride,
                        [output.height, output.width],
                        *kind,
                        &cache.argmax[pool_idx],
                        &grad,
                        &mut gin,
                    );
                }
            }
            LayerSpec::Flatten { .. } => {
                if need_input {
                    gin.copy_from_slice(&grad);
                }
            }
            LayerSpec::Dense {
                inputs,
                relu: act,
                ..
            } => {
                if *act {
                    relu_backward(&mut grad, y);
                }
                let p = weights.layers[i].as_ref().expect("trainable");
                let g = grads.layers[i].as_mut().expect("trainable");
                dense_backward_raw(
                    x,
                    n,
                    *inputs,
                    &p.weights,
                    &grad,
                    &mut g.weights,
                    &mut g.bias,
                    need_input.then_some(gin.as_mut_slice()),
                );
            }
        }
        grad = gin;
    }
    grads
}

fn relu_backward<T: Real>(grad: &mut [T], out: &[T]) {
    for (g, &y) in grad.iter_mut().zip(out) {
        if y <= T::zero() {
            *g = T::zero();
        }
    }
}

/// One SGD step `w <- w - lr * grad` on a batch. Returns the loss measured
/// before the step; a non-finite loss leaves the weights untouched.
pub fn backward_and_step<T: Real>(
    spec: &NetworkSpec,
    batch: &Tensor<T>,
    labels: &[usize],
    weights: &mut WeightSet<T>,
    learning_rate: f64,
) -> Result<f64> {
    let (loss, grads) = loss_and_gradients(spec, batch, labels, weights)?;
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss(loss));
    }
    let lr = T::of(learning_rate);
    for (p, g) in weights.layers.iter_mut().zip(&grads.layers) {
        if let (Some(p), Some(g)) = (p, g) {
            for (w, &d) in p.weights.iter_mut().zip(&g.weights) {
                *w = *w - lr * d;
            }
            for (b, &d) in p.bias.iter_mut().zip(&g.bias) {
                *b = *b - lr * d;
            }
        }
    }
    Ok(loss)
}

/// Predicted class per sample, ties toward the lowest index.
pub fn predict<T: Real>(spec: &NetworkSpec, batch: &Tensor<T>, weights: &WeightSet<T>) -> Result<Vec<usize>> {
    let (logits, _) = forward(spec, batch, weights)?;
    Ok(argmax_rows(logits.data(), spec.num_classes))
}
