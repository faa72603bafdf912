use std::path::PathBuf;

use neuroevo::data::{dataset_from_idx, load_idx, make_synthetic, to_idx, Dataset, SyntheticKind};
use neuroevo::engine::{format_tier_table, select_best, Evolution, RunConfig, RunData, RunOutcome};
use neuroevo::fitness::{Evaluator, FitnessRecord, SurrogateEvaluator};
use neuroevo::genome::{count_parameters, init_population as seeded_population, Chromosome, GeneBounds, GeneKind, Shape3};
use neuroevo::rng::stream;
use neuroevo::selection::{tournament_winner, Branch, Entrant, SelectionConfig};
use neuroevo::variation::{crossover, mutate, VariationConfig};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

fn to_py(e: neuroevo::Error) -> PyErr {
    match e {
        neuroevo::Error::Io { .. } => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Architecture plus per-layer weight statistics, in the line-oriented
/// text form used by the command line tool.
#[pyclass(name = "Chromosome", frozen, eq, from_py_object)]
#[derive(Clone, PartialEq)]
struct PyChromosome {
    inner: Chromosome,
}

#[pymethods]
impl PyChromosome {
    #[new]
    fn new(text: &str) -> PyResult<Self> {
        let inner: Chromosome = text.parse().map_err(to_py)?;
        inner.validate(&GeneBounds::default()).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn random(seed: u64) -> Self {
        Self {
            inner: neuroevo::genome::random_chromosome(&GeneBounds::default(), &mut stream(seed, &[])),
        }
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    fn kinds(&self) -> Vec<&'static str> {
        self.inner
            .kinds()
            .into_iter()
            .map(|k| match k {
                GeneKind::Conv => "conv",
                GeneKind::Pool => "pool",
                GeneKind::Fc => "fc",
            })
            .collect()
    }

    /// Trainable weights and biases for an `height x width x channels`
    /// input and `classes` outputs.
    fn param_count(&self, height: usize, width: usize, channels: usize, classes: usize) -> PyResult<u64> {
        count_parameters(&self.inner, Shape3::new(height, width, channels), classes).map_err(to_py)
    }

    #[pyo3(signature = (other, seed))]
    fn crossover(&self, other: &PyChromosome, seed: u64) -> (Self, Self) {
        let (a, b) = crossover(
            &self.inner,
            &other.inner,
            &VariationConfig::default(),
            &GeneBounds::default(),
            &mut stream(seed, &[]),
        );
        (Self { inner: a }, Self { inner: b })
    }

    #[pyo3(signature = (seed, rate = 0.1))]
    fn mutate(&self, seed: u64, rate: f64) -> PyResult<Self> {
        let cfg = VariationConfig {
            mutation_prob: rate,
            ..VariationConfig::default()
        };
        cfg.validate().map_err(to_py)?;
        Ok(Self {
            inner: mutate(&self.inner, &cfg, &GeneBounds::default(), &mut stream(seed, &[])),
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __str__(&self) -> String {
        self.inner.to_text()
    }

    fn __repr__(&self) -> String {
        format!("Chromosome({:?})", self.inner.to_text())
    }
}

/// Labelled grayscale images with pixels in `[0, 1]`.
#[pyclass(name = "Dataset", frozen, from_py_object)]
#[derive(Clone)]
struct PyDataset {
    inner: Dataset,
}

#[pymethods]
impl PyDataset {
    /// `kind` is `"separable-blobs"` or `"rectangle-toy"`.
    #[staticmethod]
    fn synthetic(kind: &str, n: usize, size: usize, seed: u64) -> PyResult<Self> {
        let kind = match kind {
            "separable-blobs" => SyntheticKind::SeparableBlobs,
            "rectangle-toy" => SyntheticKind::RectangleToy,
            other => return Err(PyValueError::new_err(format!("unknown dataset kind {other:?}"))),
        };
        Ok(Self {
            inner: make_synthetic(kind, n, size, seed).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn from_idx(images: &[u8], labels: &[u8]) -> PyResult<Self> {
        Ok(Self {
            inner: dataset_from_idx(images, labels).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn load(images_path: PathBuf, labels_path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: load_idx(images_path, labels_path).map_err(to_py)?,
        })
    }

    /// Image and label files as IDX bytes.
    fn to_idx<'py>(&self, py: Python<'py>) -> PyResult<(Bound<'py, PyBytes>, Bound<'py, PyBytes>)> {
        let (i, l) = to_idx(&self.inner).map_err(to_py)?;
        Ok((PyBytes::new(py, &i), PyBytes::new(py, &l)))
    }

    /// `(n, height, width, channels)`
    #[getter]
    fn shape(&self) -> (usize, usize, usize, usize) {
        let s = self.inner.sample_shape();
        (self.inner.len(), s.height, s.width, s.channels)
    }

    #[getter]
    fn labels(&self) -> Vec<usize> {
        self.inner.labels().to_vec()
    }

    #[getter]
    fn num_classes(&self) -> usize {
        self.inner.num_classes()
    }

    /// Row-major pixel values.
    fn pixels(&self) -> Vec<f32> {
        self.inner.images().data().to_vec()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

#[pyfunction]
fn init_population(n: usize, seed: u64) -> Vec<PyChromosome> {
    seeded_population(n, &GeneBounds::default(), &mut stream(seed, &[]))
        .into_iter()
        .map(|i| PyChromosome { inner: i.chromosome })
        .collect()
}

/// Decides a slack tournament between two `(mean_error, std_error,
/// param_count)` triples. Returns the winner's index and the rule that
/// decided it; `coin` settles full ties.
#[pyfunction]
#[pyo3(signature = (a, b, alpha = 0.01, beta = 100_000.0, coin = false))]
fn tournament(a: (f64, f64, u64), b: (f64, f64, u64), alpha: f64, beta: f64, coin: bool) -> (usize, &'static str) {
    let rec = |(mean_error, std_error, param_count): (f64, f64, u64)| FitnessRecord {
        mean_error,
        std_error,
        param_count,
        epochs_used: 0,
        diverged: false,
    };
    let cfg = SelectionConfig {
        alpha,
        beta,
        ..SelectionConfig::default()
    };
    let (w, branch) = tournament_winner(&rec(a), &rec(b), &cfg, || coin);
    let index = match w {
        Entrant::First => 0,
        Entrant::Second => 1,
    };
    let rule = match branch {
        Branch::Mean => "mean",
        Branch::Params => "params",
        Branch::Std => "std",
        Branch::Coin => "coin",
    };
    (index, rule)
}

/// Result of an evolution run.
#[pyclass(name = "Run", frozen)]
struct PyRun {
    /// `(generation, best, mean, worst mean error, best param count)`
    #[pyo3(get)]
    history: Vec<(usize, f64, f64, f64, u64)>,
    /// `(id, mean error, std error, param count)` per final individual.
    #[pyo3(get)]
    population: Vec<(u64, f64, f64, u64)>,
    #[pyo3(get)]
    best: PyChromosome,
    #[pyo3(get)]
    best_error: f64,
    #[pyo3(get)]
    tier_table: String,
}

fn summarize(out: RunOutcome, config: &RunConfig) -> neuroevo::Result<PyRun> {
    let best = select_best(&out.population, config.best_pick)?;
    let best_error = best.fitness()?.mean_error;
    let population = out
        .population
        .iter()
        .map(|i| i.fitness().map(|f| (i.id, f.mean_error, f.std_error, f.param_count)))
        .collect::<neuroevo::Result<_>>()?;
    Ok(PyRun {
        history: out
            .history
            .iter()
            .map(|s| {
                (
                    s.generation,
                    s.best_mean_error,
                    s.mean_mean_error,
                    s.worst_mean_error,
                    s.best_param_count,
                )
            })
            .collect(),
        population,
        best: PyChromosome {
            inner: best.chromosome.clone(),
        },
        best_error,
        tier_table: format_tier_table(&out.tiers),
    })
}

/// Runs an evolution from a TOML config. With no `train` set, fitness
/// comes from the built-in analytic surrogate instead of training.
#[pyfunction]
#[pyo3(signature = (config_toml, train = None, test = None, out_dir = None, workers = 1))]
fn evolve(
    py: Python<'_>,
    config_toml: &str,
    train: Option<PyDataset>,
    test: Option<PyDataset>,
    out_dir: Option<PathBuf>,
    workers: usize,
) -> PyResult<PyRun> {
    let config = RunConfig::from_toml(config_toml).map_err(to_py)?;
    py.detach(move || {
        let run = |ev: &dyn Evaluator| -> neuroevo::Result<PyRun> {
            let out = Evolution::new(config.clone(), ev, workers, out_dir)?.run()?;
            summarize(out, &config)
        };
        match train {
            Some(train) => {
                let data = RunData::split(&train.inner, test.map(|t| t.inner), &config)?;
                run(&data.evaluator(&config))
            }
            None => run(&SurrogateEvaluator::default()),
        }
    })
    .map_err(to_py)
}

#[pymodule]
fn pyneuroevo(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyChromosome>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyRun>()?;
    m.add_function(wrap_pyfunction!(init_population, m)?)?;
    m.add_function(wrap_pyfunction!(tournament, m)?)?;
    m.add_function(wrap_pyfunction!(evolve, m)?)?;
    Ok(())
}
