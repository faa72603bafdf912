use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use super::config::RunConfig;
use super::report::{render_report, tier_table, TierRow};
use crate::fitness::{evaluate_population, Evaluation, Evaluator};
use crate::genome::{init_population, Individual};
use crate::rng::{stream, tag};
use crate::selection::{elite_order, environmental_selection, fill_mating_pool};
use crate::variation::generate_offspring;
use crate::{Error, Result};

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const RUN_LOG_FILE: &str = "run.jsonl";
pub const EVAL_LOG_FILE: &str = "evaluations.log";
pub const REPORT_FILE: &str = "report.txt";

/// Tiers reported in the final accuracy/parameter table.
pub const REPORT_TIERS: usize = 5;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: usize,
    pub best_mean_error: f64,
    pub mean_mean_error: f64,
    pub worst_mean_error: f64,
    pub best_param_count: u64,
    /// Not serialized, so that run logs stay byte-identical between runs.
    #[serde(skip)]
    pub wall_seconds: f64,
}

// Wall time is measurement noise, not state.
impl PartialEq for GenerationStats {
    fn eq(&self, other: &Self) -> bool {
        self.generation == other.generation
            && self.best_mean_error == other.best_mean_error
            && self.mean_mean_error == other.mean_mean_error
            && self.worst_mean_error == other.worst_mean_error
            && self.best_param_count == other.best_param_count
    }
}

impl GenerationStats {
    pub fn of(generation: usize, pop: &[Individual], wall_seconds: f64) -> Result<Self> {
        let errors = pop
            .iter()
            .map(|i| i.fitness().map(|f| f.mean_error))
            .collect::<Result<Vec<_>>>()?;
        let best = pop
            .iter()
            .min_by(|a, b| elite_order(a, b))
            .ok_or(Error::InsufficientCandidates { needed: 1, got: 0 })?;
        Ok(Self {
            generation,
            best_mean_error: errors.iter().copied().fold(f64::INFINITY, f64::min),
            mean_mean_error: errors.iter().sum::<f64>() / errors.len() as f64,
            worst_mean_error: errors.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            best_param_count: best.fitness()?.param_count,
            wall_seconds,
        })
    }
}

/// Everything needed to continue a run besides its configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunState {
    /// Number of completed generations; the population is `P_generation`.
    pub generation: usize,
    pub population: Vec<Individual>,
    pub next_id: u64,
    pub history: Vec<GenerationStats>,
}

/// One line of `run.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "kebab-case")]
pub enum RunRecord {
    Generation(GenerationStats),
    Tiers { rows: Vec<TierRow> },
}

/// The evolutionary loop. Generation `t` draws its mating, variation and
/// survival randomness from streams keyed by `(seed, t)`, so a run can be
/// stopped after any generation and continued from its checkpoint.
pub struct Evolution<'e> {
    config: RunConfig,
    evaluator: &'e dyn Evaluator,
    workers: usize,
    out_dir: Option<PathBuf>,
    state: RunState,
}

impl<'e> Evolution<'e> {
    /// Creates and evaluates the initial population. With an output
    /// directory, a checkpoint is written after every generation.
    pub fn new(
        config: RunConfig,
        evaluator: &'e dyn Evaluator,
        workers: usize,
        out_dir: Option<PathBuf>,
    ) -> Result<Self> {
        config.validate()?;
        if let Some(dir) = &out_dir {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let log = dir.join(EVAL_LOG_FILE);
            File::create(&log).map_err(|e| Error::io(&log, e))?;
        }
        let start = Instant::now();
        let mut rng = stream(config.seed, &[tag::INIT]);
        let population = init_population(config.population_size, &config.bounds, &mut rng);
        let mut evo = Self {
            state: RunState {
                generation: 0,
                next_id: population.len() as u64,
                population,
                history: Vec::new(),
            },
            config,
            evaluator,
            workers,
            out_dir,
        };
        let evals = evaluate_population(&mut evo.state.population, evaluator, workers)?;
        evo.log_evaluations(0, &evals)?;
        let stats = GenerationStats::of(0, &evo.state.population, start.elapsed().as_secs_f64())?;
        evo.state.history.push(stats);
        evo.persist()?;
        Ok(evo)
    }

    /// Continues from a checkpoint. Evaluation telemetry is appended to an
    /// existing log in `out_dir`.
    pub fn resume(
        checkpoint: Checkpoint,
        evaluator: &'e dyn Evaluator,
        workers: usize,
        out_dir: Option<PathBuf>,
    ) -> Result<Self> {
        checkpoint.config.validate()?;
        let state = checkpoint.state;
        if state.population.len() != checkpoint.config.population_size {
            return Err(Error::Config(format!(
                "checkpoint holds {} individuals, config expects {}",
                state.population.len(),
                checkpoint.config.population_size
            )));
        }
        if let Some(dir) = &out_dir {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        Ok(Self {
            config: checkpoint.config,
            evaluator,
            workers,
            out_dir,
            state,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn state(&self) -> &RunState {
        &self.state
    }

    pub fn generation(&self) -> usize {
        self.state.generation
    }

    pub fn population(&self) -> &[Individual] {
        &self.state.population
    }

    pub fn history(&self) -> &[GenerationStats] {
        &self.state.history
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.config.clone(),
            state: self.state.clone(),
        }
    }

    /// Runs one generation: mating pool, offspring, evaluation of the new
    /// individuals, environmental selection over parents and offspring.
    pub fn step(&mut self) -> Result<&GenerationStats> {
        let start = Instant::now();
        let t = (self.state.generation + 1) as u64;
        let cfg = &self.config;
        let pool = fill_mating_pool(
            &self.state.population,
            &cfg.selection,
            &mut stream(cfg.seed, &[tag::MATING, t]),
        )?;
        let mut offspring = generate_offspring(
            pool,
            &cfg.variation,
            &cfg.bounds,
            &mut stream(cfg.seed, &[tag::VARIATION, t]),
            &mut self.state.next_id,
        )?;
        let evals = evaluate_population(&mut offspring, self.evaluator, self.workers)?;
        let mut candidates = std::mem::take(&mut self.state.population);
        candidates.extend(offspring);
        self.state.population = environmental_selection(
            candidates,
            cfg.population_size,
            &cfg.selection,
            &mut stream(cfg.seed, &[tag::ENVIRONMENT, t]),
        )?;
        self.state.generation += 1;
        self.log_evaluations(self.state.generation, &evals)?;
        let stats = GenerationStats::of(
            self.state.generation,
            &self.state.population,
            start.elapsed().as_secs_f64(),
        )?;
        self.state.history.push(stats);
        self.persist()?;
        Ok(self.state.history.last().expect("history is non-empty"))
    }

    /// Steps until `generation` generations are complete (no-op if already there).
    pub fn run_until(&mut self, generation: usize) -> Result<()> {
        while self.state.generation < generation {
            self.step()?;
        }
        Ok(())
    }

    /// Runs to the configured generation count and writes the final report.
    pub fn run(mut self) -> Result<RunOutcome> {
        self.run_until(self.config.generations)?;
        self.finish()
    }

    /// Writes the tier table and report without running further generations.
    pub fn finish(self) -> Result<RunOutcome> {
        let tiers = tier_table(&self.state.population, REPORT_TIERS)?;
        if let Some(dir) = &self.out_dir {
            let mut log = self.run_log();
            let line = serde_json::to_string(&RunRecord::Tiers { rows: tiers.clone() })?;
            log.push_str(&line);
            log.push('\n');
            write_file(&dir.join(RUN_LOG_FILE), log.as_bytes())?;
            let report = render_report(&self.config, &self.state, &tiers)?;
            write_file(&dir.join(REPORT_FILE), report.as_bytes())?;
        }
        Ok(RunOutcome {
            population: self.state.population,
            history: self.state.history,
            tiers,
        })
    }

    fn run_log(&self) -> String {
        self.state
            .history
            .iter()
            .map(|s| {
                let mut line = serde_json::to_string(&RunRecord::Generation(s.clone()))
                    .expect("stats serialize");
                line.push('\n');
                line
            })
            .collect()
    }

    fn persist(&self) -> Result<()> {
        let Some(dir) = &self.out_dir else {
            return Ok(());
        };
        self.checkpoint().save(dir.join(CHECKPOINT_FILE))?;
        write_file(&dir.join(RUN_LOG_FILE), self.run_log().as_bytes())
    }

    fn log_evaluations(&self, generation: usize, evals: &[Evaluation]) -> Result<()> {
        let Some(dir) = &self.out_dir else {
            return Ok(());
        };
        let path = dir.join(EVAL_LOG_FILE);
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        let mut text = String::new();
        for e in evals {
            text.push_str(&format!(
                "{generation}\t{}\t{}\t{}\t{}\t{:.6}\n",
                e.id, e.record.mean_error, e.record.std_error, e.record.param_count, e.wall_seconds
            ));
        }
        f.write_all(text.as_bytes()).map_err(|e| Error::io(&path, e))
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutcome {
    pub population: Vec<Individual>,
    pub history: Vec<GenerationStats>,
    pub tiers: Vec<TierRow>,
}

/// Runs a full evolution in memory and returns the final population and the
/// per-generation history (generation 0 included).
pub fn run_evolution(
    config: RunConfig,
    evaluator: &dyn Evaluator,
    workers: usize,
) -> Result<(Vec<Individual>, Vec<GenerationStats>)> {
    let outcome = Evolution::new(config, evaluator, workers, None)?.run()?;
    Ok((outcome.population, outcome.history))
}
