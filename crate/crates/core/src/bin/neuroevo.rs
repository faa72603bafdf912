use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use neuroevo::data::{make_synthetic, write_idx, SyntheticKind};
use neuroevo::engine::{
    compare_initializers, final_train, select_best, BestPick, Checkpoint, Evolution, RunConfig, RunData,
    REPORT_FILE,
};
use neuroevo::{Error, Result};

#[derive(Parser)]
#[command(name = "neuroevo", version, about = "Evolve CNN architectures and their weight initialization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run (or resume) an evolution.
    Evolve {
        /// TOML run configuration. Defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// IDX training images; overrides the config.
        #[arg(long, requires = "dataset_labels")]
        dataset_images: Option<PathBuf>,
        /// IDX training labels; overrides the config.
        #[arg(long, requires = "dataset_images")]
        dataset_labels: Option<PathBuf>,
        /// Output directory for checkpoint, logs and report.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Continue from this checkpoint instead of starting afresh.
        #[arg(long, conflicts_with_all = ["config", "seed"])]
        resume: Option<PathBuf>,
    },
    /// Train the selected individual of a finished run in full.
    FinalTrain {
        #[arg(long)]
        checkpoint: PathBuf,
        /// `min-error` or `min-params:<tol>`; defaults to the run's setting.
        #[arg(long)]
        policy: Option<BestPick>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Evolved Gaussian initialization against Xavier on the selected individual.
    CompareInit {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Number of training seeds (0..n).
        #[arg(long, default_value_t = 10)]
        seeds: u64,
    },
    /// Write a synthetic dataset as IDX files.
    GenData {
        #[arg(long, value_enum)]
        kind: SyntheticKind,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 16)]
        size: usize,
        /// Directory receiving images.idx and labels.idx.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Evolve {
            config,
            dataset_images,
            dataset_labels,
            out,
            seed,
            workers,
            resume,
        } => {
            let checkpoint = resume.map(Checkpoint::load).transpose()?;
            let mut cfg = match (&checkpoint, config) {
                (Some(c), _) => c.config.clone(),
                (None, Some(path)) => RunConfig::load(path)?,
                (None, None) => RunConfig::default(),
            };
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            if let (Some(images), Some(labels)) = (dataset_images, dataset_labels) {
                cfg.dataset.train_images = Some(absolute(&images)?);
                cfg.dataset.train_labels = Some(absolute(&labels)?);
            }
            cfg.validate()?;
            let data = RunData::load(&cfg)?;
            eprintln!(
                "train {} / fitness {} images of {}, {} classes",
                data.train.len(),
                data.fitness.len(),
                data.train.sample_shape(),
                data.train.num_classes()
            );
            let evaluator = data.evaluator(&cfg);
            let mut evo = match checkpoint {
                Some(mut c) => {
                    c.config = cfg.clone();
                    Evolution::resume(c, &evaluator, workers, Some(out.clone()))?
                }
                None => Evolution::new(cfg.clone(), &evaluator, workers, Some(out.clone()))?,
            };
            print_stats(evo.history().last());
            while evo.generation() < cfg.generations {
                let stats = evo.step()?.clone();
                print_stats(Some(&stats));
            }
            let outcome = evo.finish()?;
            let best = select_best(&outcome.population, cfg.best_pick)?;
            println!("best individual {}:\n{}", best.id, best.chromosome.to_text());
            println!("report written to {}", out.join(REPORT_FILE).display());
            Ok(())
        }
        Command::FinalTrain {
            checkpoint,
            policy,
            epochs,
        } => {
            let ckpt = Checkpoint::load(&checkpoint)?;
            let mut cfg = ckpt.config.final_train.clone();
            if let Some(epochs) = epochs {
                cfg.epochs = epochs;
            }
            let data = RunData::load(&ckpt.config)?;
            let (train, test) = data.final_sets()?;
            let best = select_best(&ckpt.state.population, policy.unwrap_or(ckpt.config.best_pick))?;
            let (net, error) = final_train(best, &train, &test, &cfg)?;
            println!(
                "individual {}  params {}  epochs {}  test error {:.4}",
                best.id,
                net.spec.param_count(),
                cfg.epochs,
                error
            );
            let path = checkpoint.with_file_name("final_network.json");
            std::fs::write(&path, serde_json::to_vec(&net)?).map_err(|e| Error::io(&path, e))?;
            println!("weights written to {}", path.display());
            Ok(())
        }
        Command::CompareInit { checkpoint, seeds } => {
            if seeds == 0 {
                return Err(Error::Config("--seeds must be at least 1".into()));
            }
            let ckpt = Checkpoint::load(&checkpoint)?;
            let data = RunData::load(&ckpt.config)?;
            let (train, test) = data.final_sets()?;
            let best = select_best(&ckpt.state.population, ckpt.config.best_pick)?;
            let mut text = format!("\ninitializer comparison, individual {}\n", best.id);
            text.push_str("seed  gaussian_error  xavier_error  difference\n");
            let mut diffs = Vec::new();
            for seed in 0..seeds {
                let cfg = neuroevo::network::TrainConfig {
                    seed,
                    ..ckpt.config.final_train.clone()
                };
                let c = compare_initializers(best, &train, &test, &cfg)?;
                let line = format!(
                    "{seed:>4}  {:>14.4}  {:>12.4}  {:>10.4}\n",
                    c.gaussian_error,
                    c.xavier_error,
                    c.gain()
                );
                print!("{line}");
                text.push_str(&line);
                diffs.push(c.gain());
            }
            diffs.sort_by(f64::total_cmp);
            let median = if diffs.len() % 2 == 1 {
                diffs[diffs.len() / 2]
            } else {
                (diffs[diffs.len() / 2 - 1] + diffs[diffs.len() / 2]) / 2.0
            };
            let summary = format!("median xavier minus gaussian error: {median:.4}\n");
            print!("{summary}");
            text.push_str(&summary);
            let report = checkpoint.with_file_name(REPORT_FILE);
            OpenOptions::new()
                .create(true)
                .append(true)
                .open(&report)
                .and_then(|mut f| f.write_all(text.as_bytes()))
                .map_err(|e| Error::io(&report, e))
        }
        Command::GenData {
            kind,
            n,
            size,
            out,
            seed,
        } => {
            let d = make_synthetic(kind, n, size, seed)?;
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            write_idx(&d, out.join("images.idx"), out.join("labels.idx"))?;
            println!("wrote {n} {size}x{size} images to {}", out.display());
            Ok(())
        }
    }
}

fn absolute(p: &Path) -> Result<PathBuf> {
    std::path::absolute(p).map_err(|e| Error::io(p, e))
}

fn print_stats(stats: Option<&neuroevo::engine::GenerationStats>) {
    if let Some(s) = stats {
        eprintln!(
            "gen {:>3}  best {:.4}  mean {:.4}  worst {:.4}  params {}  ({:.1}s)",
            s.generation, s.best_mean_error, s.mean_mean_error, s.worst_mean_error, s.best_param_count, s.wall_seconds
        );
    }
}
