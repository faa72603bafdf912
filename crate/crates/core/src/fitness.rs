//! Fitness evaluation by truncated training.
//!
//! Each individual is decoded, initialized from its evolved Gaussian
//! statistics and trained for `k` epochs. After the last epoch the network is
//! scored batch by batch on the fitness split; the record keeps the mean and
//! population standard deviation of those per-batch errors together with the
//! parameter count.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::genome::{count_parameters, Chromosome, Individual, Shape3};
use crate::network::{batch_errors, gaussian_init, train_epochs, TrainConfig};
use crate::rng::{derive_seed, stream, tag};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitnessRecord {
    pub mean_error: f64,
    pub std_error: f64,
    pub param_count: u64,
    pub epochs_used: usize,
    pub diverged: bool,
}

impl FitnessRecord {
    /// Worst possible record, used for diverged or undecodable individuals.
    pub fn worst(param_count: u64, epochs_used: usize) -> Self {
        Self {
            mean_error: 1.0,
            std_error: 0.0,
            param_count,
            epochs_used,
            diverged: true,
        }
    }
}

/// Mean and population (divide-by-n) standard deviation.
pub fn mean_and_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Scores one individual. Implementations must be pure functions of the
/// individual so that results do not depend on scheduling.
pub trait Evaluator: Sync {
    fn evaluate(&self, ind: &Individual) -> FitnessRecord;
}

/// Truncated-training fitness on a train/fitness split.
#[derive(Clone, Debug)]
pub struct TrainingEvaluator {
    pub train: Dataset,
    pub fitness: Dataset,
    /// Training epochs before scoring.
    pub k: usize,
    pub train_config: TrainConfig,
}

impl Evaluator for TrainingEvaluator {
    fn evaluate(&self, ind: &Individual) -> FitnessRecord {
        evaluate_individual(ind, &self.train, &self.fitness, self.k, &self.train_config)
    }
}

/// Trains `ind` for `k` epochs and scores it on `fitness_set`.
///
/// The fitness split is cut into `floor(|fitness_set| / batch_size)` full
/// batches (remainder unused); when the split is smaller than one batch it is
/// scored as a single batch. Weight draws and batch order derive from the
/// individual's own seed.
pub fn evaluate_individual(
    ind: &Individual,
    train_set: &Dataset,
    fitness_set: &Dataset,
    k: usize,
    cfg: &TrainConfig,
) -> FitnessRecord {
    let input = train_set.sample_shape();
    let classes = train_set.num_classes();
    let Ok(spec) = ind.chromosome.decode(input, classes) else {
        return FitnessRecord::worst(u64::MAX, k.max(1));
    };
    let params = spec.param_count();
    let run = || -> Result<Vec<f64>> {
        if k == 0 || fitness_set.is_empty() {
            return Err(Error::Config("need k >= 1 and a non-empty fitness set".into()));
        }
        let mut weights = gaussian_init::<f32, _>(&spec, &mut stream(ind.rng_seed, &[tag::WEIGHTS]))?;
        let shuffle = derive_seed(ind.rng_seed, &[tag::SHUFFLE]);
        train_epochs(&spec, &mut weights, train_set, cfg, shuffle, 0..k)?;
        let batch = cfg.batch_size.min(fitness_set.len());
        batch_errors(&spec, &weights, fitness_set, batch)
    };
    match run() {
        Ok(errors) => {
            let (mean_error, std_error) = mean_and_std(&errors);
            FitnessRecord {
                mean_error,
                std_error,
                param_count: params,
                epochs_used: k,
                diverged: false,
            }
        }
        Err(_) => FitnessRecord::worst(params, k.max(1)),
    }
}

/// One freshly computed fitness record.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub id: u64,
    pub record: FitnessRecord,
    pub wall_seconds: f64,
}

/// Evaluates every individual that has no fitness yet on `workers` threads.
/// Already-evaluated individuals keep their cached record. Returns the new
/// evaluations in population order.
pub fn evaluate_population(
    pop: &mut [Individual],
    evaluator: &dyn Evaluator,
    workers: usize,
) -> Result<Vec<Evaluation>> {
    if workers == 0 {
        return Err(Error::Config("worker count must be at least 1".into()));
    }
    let pending: Vec<usize> = (0..pop.len()).filter(|&i| pop[i].fitness.is_none()).collect();
    let run = |i: &usize| {
        let start = Instant::now();
        let record = evaluator.evaluate(&pop[*i]);
        (record, start.elapsed().as_secs_f64())
    };
    let results: Vec<_> = if workers == 1 {
        pending.iter().map(run).collect()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(|| pending.par_iter().map(run).collect())
    };
    Ok(pending
        .into_iter()
        .zip(results)
        .map(|(i, (record, wall_seconds))| {
            pop[i].fitness = Some(record.clone());
            Evaluation {
                id: pop[i].id,
                record,
                wall_seconds,
            }
        })
        .collect())
}

/// Training-free stand-in objective used to exercise the evolutionary loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurrogateConfig {
    pub input: Shape3,
    pub num_classes: usize,
    pub target_depth: usize,
    pub target_params: u64,
    /// Preferred weight standard deviation; preferred mean is zero.
    pub target_std: f64,
    pub depth_weight: f64,
    pub param_weight: f64,
    pub init_weight: f64,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            input: Shape3::new(16, 16, 1),
            num_classes: 2,
            target_depth: 6,
            target_params: 5_000,
            target_std: 0.1,
            depth_weight: 1.0,
            param_weight: 1.0,
            init_weight: 1.0,
        }
    }
}

/// Per-term distances in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurrogateTerms {
    pub depth: f64,
    pub params: f64,
    pub init: f64,
}

#[derive(Clone, Debug, Default)]
pub struct SurrogateEvaluator {
    pub config: SurrogateConfig,
}

impl SurrogateEvaluator {
    pub fn new(config: SurrogateConfig) -> Self {
        Self { config }
    }

    pub fn terms(&self, c: &Chromosome) -> Option<(SurrogateTerms, u64)> {
        let cfg = &self.config;
        let params = count_parameters(c, cfg.input, cfg.num_classes).ok()?;
        let depth = c.len() as f64;
        let target = cfg.target_depth.max(1) as f64;
        let stats: Vec<(f64, f64)> = c
            .genes()
            .iter()
            .filter_map(|g| match g {
                crate::genome::LayerGene::Conv(g) => Some((g.weight_mean, g.weight_std)),
                crate::genome::LayerGene::Fc(g) => Some((g.weight_mean, g.weight_std)),
                crate::genome::LayerGene::Pool(_) => None,
            })
            .collect();
        let init = stats
            .iter()
            .map(|(m, s)| (m.abs() + (s - cfg.target_std).abs()).min(1.0))
            .sum::<f64>()
            / stats.len() as f64;
        // three decades away counts as maximally wrong
        let decades = ((params.max(1) as f64).log10() - (cfg.target_params.max(1) as f64).log10()).abs();
        let terms = SurrogateTerms {
            depth: ((depth - target).abs() / target).min(1.0),
            params: (decades / 3.0).min(1.0),
            init,
        };
        Some((terms, params))
    }
}

impl Evaluator for SurrogateEvaluator {
    fn evaluate(&self, ind: &Individual) -> FitnessRecord {
        let Some((t, params)) = self.terms(&ind.chromosome) else {
            return FitnessRecord::worst(u64::MAX, 1);
        };
        let c = &self.config;
        let total = c.depth_weight + c.param_weight + c.init_weight;
        let mean_error = (c.depth_weight * t.depth + c.param_weight * t.params + c.init_weight * t.init) / total;
        FitnessRecord {
            mean_error: mean_error.clamp(0.0, 1.0),
            std_error: 0.0,
            param_count: params,
            epochs_used: 1,
            diverged: false,
        }
    }
}

/// Convenience wrapper around [`SurrogateEvaluator`].
pub fn surrogate_evaluate(ind: &Individual, config: &SurrogateConfig) -> FitnessRecord {
    SurrogateEvaluator::new(config.clone()).evaluate(ind)
}
