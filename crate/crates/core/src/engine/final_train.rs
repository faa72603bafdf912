use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::data::{load_idx, split_train_fitness, Dataset};
use crate::fitness::TrainingEvaluator;
use crate::genome::Individual;
use crate::network::{
    classification_error, gaussian_init, train_epochs, xavier_init, NetworkSpec, TrainConfig, WeightSet,
};
use crate::rng::{derive_seed, stream, tag};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedNetwork {
    pub spec: NetworkSpec,
    pub weights: WeightSet<f32>,
}

/// How the starting weights of a final training run are drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitScheme {
    /// The individual's evolved per-layer mean and std.
    Evolved,
    Xavier,
}

/// Trains `ind` from scratch with `scheme` weights for `cfg.epochs` and
/// returns the network with its error on `test`. Weight draws and batch
/// order depend only on the individual's seed and `cfg.seed`, never on the
/// scheme, so two schemes see the same data order.
pub fn train_with_init(
    ind: &Individual,
    scheme: InitScheme,
    train: &Dataset,
    test: &Dataset,
    cfg: &TrainConfig,
) -> Result<(TrainedNetwork, f64)> {
    cfg.validate()?;
    if train.sample_shape() != test.sample_shape() {
        return Err(Error::Shape(format!(
            "train samples are {}, test samples are {}",
            train.sample_shape(),
            test.sample_shape()
        )));
    }
    let classes = train.num_classes().max(test.num_classes());
    let spec = ind.chromosome.decode(train.sample_shape(), classes)?;
    let seed = derive_seed(ind.rng_seed, &[tag::FINAL, cfg.seed]);
    let mut rng = stream(seed, &[tag::WEIGHTS]);
    let mut weights = match scheme {
        InitScheme::Evolved => gaussian_init::<f32, _>(&spec, &mut rng)?,
        InitScheme::Xavier => xavier_init::<f32, _>(&spec, &mut rng),
    };
    train_epochs(&spec, &mut weights, train, cfg, derive_seed(seed, &[tag::SHUFFLE]), 0..cfg.epochs)?;
    let error = classification_error(&spec, &weights, test)?;
    Ok((TrainedNetwork { spec, weights }, error))
}

/// Deep training of the selected individual from its evolved initialization.
pub fn final_train(
    ind: &Individual,
    train: &Dataset,
    test: &Dataset,
    cfg: &TrainConfig,
) -> Result<(TrainedNetwork, f64)> {
    train_with_init(ind, InitScheme::Evolved, train, test, cfg)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitComparison {
    pub gaussian_error: f64,
    pub xavier_error: f64,
}

impl InitComparison {
    /// Positive when the evolved initialization does better.
    pub fn gain(&self) -> f64 {
        self.xavier_error - self.gaussian_error
    }
}

/// Trains the same architecture twice, from two initialization schemes,
/// with identical data order and epochs.
pub fn compare_schemes(
    ind: &Individual,
    a: InitScheme,
    b: InitScheme,
    train: &Dataset,
    test: &Dataset,
    cfg: &TrainConfig,
) -> Result<(f64, f64)> {
    let (_, ea) = train_with_init(ind, a, train, test, cfg)?;
    let (_, eb) = train_with_init(ind, b, train, test, cfg)?;
    Ok((ea, eb))
}

/// Evolved Gaussian initialization against Xavier on the same architecture.
pub fn compare_initializers(
    ind: &Individual,
    train: &Dataset,
    test: &Dataset,
    cfg: &TrainConfig,
) -> Result<InitComparison> {
    let (gaussian_error, xavier_error) =
        compare_schemes(ind, InitScheme::Evolved, InitScheme::Xavier, train, test, cfg)?;
    Ok(InitComparison {
        gaussian_error,
        xavier_error,
    })
}

/// The datasets a run works on.
#[derive(Clone, Debug)]
pub struct RunData {
    /// Candidate training split.
    pub train: Dataset,
    /// Held out from candidate training and used for fitness.
    pub fitness: Dataset,
    pub test: Option<Dataset>,
}

impl RunData {
    /// Splits `full` into train and fitness parts with a seed derived from
    /// the run seed.
    pub fn split(full: &Dataset, test: Option<Dataset>, cfg: &RunConfig) -> Result<Self> {
        let seed = derive_seed(cfg.seed, &[tag::SPLIT]);
        let (train, fitness) = split_train_fitness(full, cfg.fitness.fitness_fraction, seed)?;
        if train.is_empty() || fitness.is_empty() {
            return Err(Error::Config(format!(
                "{} images are too few for a {} fitness split",
                full.len(),
                cfg.fitness.fitness_fraction
            )));
        }
        Ok(Self { train, fitness, test })
    }

    /// Loads the IDX files named in the configuration.
    pub fn load(cfg: &RunConfig) -> Result<Self> {
        let ds = &cfg.dataset;
        let (Some(images), Some(labels)) = (&ds.train_images, &ds.train_labels) else {
            return Err(Error::Config("dataset.train_images and dataset.train_labels are required".into()));
        };
        let full = load_idx(images, labels)?;
        let test = match (&ds.test_images, &ds.test_labels) {
            (Some(i), Some(l)) => Some(load_idx(i, l)?),
            (None, None) => None,
            _ => return Err(Error::Config("give both test_images and test_labels or neither".into())),
        };
        Self::split(&full, test, cfg)
    }

    pub fn evaluator(&self, cfg: &RunConfig) -> TrainingEvaluator {
        TrainingEvaluator {
            train: self.train.clone(),
            fitness: self.fitness.clone(),
            k: cfg.fitness.k,
            train_config: cfg.fitness.train.clone(),
        }
    }

    /// Train and test sets for final training. With a test set the network
    /// trains on all training images; without one it trains on the train
    /// split and is scored on the fitness split.
    pub fn final_sets(&self) -> Result<(Dataset, Dataset)> {
        match &self.test {
            Some(test) => Ok((self.train.concat(&self.fitness)?, test.clone())),
            None => Ok((self.train.clone(), self.fitness.clone())),
        }
    }
}
