use serde::{Deserialize, Serialize};

use super::model::{backward_and_step, predict, WeightSet};
use super::spec::NetworkSpec;
use crate::data::{batch_iter, BatchMode, Dataset};
use crate::rng::{derive_seed, tag};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            batch_size: 64,
            epochs: 5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate {} must be finite and non-negative",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        Ok(())
    }
}

/// Runs `epochs` passes of minibatch SGD. Epoch `e` shuffles with a seed
/// derived from `(shuffle_seed, e)`, so two calls with equal arguments see
/// identical batch orders.
pub fn train_epochs(
    spec: &NetworkSpec,
    weights: &mut WeightSet<f32>,
    data: &Dataset,
    cfg: &TrainConfig,
    shuffle_seed: u64,
    epochs: std::ops::Range<usize>,
) -> Result<()> {
    for epoch in epochs {
        let seed = derive_seed(shuffle_seed, &[tag::SHUFFLE, epoch as u64]);
        for (images, labels) in batch_iter(data, cfg.batch_size, BatchMode::Train, Some(seed)) {
            backward_and_step(spec, &images, &labels, weights, cfg.learning_rate)?;
        }
    }
    Ok(())
}

const EVAL_CHUNK: usize = 256;

/// Misclassified fraction over the whole dataset.
pub fn classification_error(spec: &NetworkSpec, weights: &WeightSet<f32>, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Config("cannot score an empty dataset".into()));
    }
    let mut wrong = 0usize;
    for (images, labels) in batch_iter(data, EVAL_CHUNK, BatchMode::Train, None) {
        let pred = predict(spec, &images, weights)?;
        wrong += pred.iter().zip(&labels).filter(|(p, y)| p != y).count();
    }
    Ok(wrong as f64 / data.len() as f64)
}

/// Classification error of each of the `floor(|data| / batch_size)` full
/// batches, in storage order.
pub fn batch_errors(
    spec: &NetworkSpec,
    weights: &WeightSet<f32>,
    data: &Dataset,
    batch_size: usize,
) -> Result<Vec<f64>> {
    batch_iter(data, batch_size, BatchMode::Eval, None)
        .map(|(images, labels)| {
            let pred = predict(spec, &images, weights)?;
            let wrong = pred.iter().zip(&labels).filter(|(p, y)| p != y).count();
            Ok(wrong as f64 / labels.len() as f64)
        })
        .collect()
}
