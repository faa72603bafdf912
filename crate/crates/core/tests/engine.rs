use std::process::Command;
use std::sync::atomic::{AtomicUsize, Ordering};

use neuroevo::data::{make_synthetic, write_idx, SyntheticKind};
use neuroevo::engine::{
    compare_schemes, final_train, run_evolution, select_best, BestPick, Checkpoint, Evolution, InitScheme,
    RunConfig, RunData, RunRecord, CHECKPOINT_FILE, EVAL_LOG_FILE, REPORT_FILE, RUN_LOG_FILE,
};
use neuroevo::fitness::{Evaluator, FitnessRecord, SurrogateEvaluator};
use neuroevo::genome::{GeneBounds, Individual, Interval};
use neuroevo::network::{classification_error, gaussian_init, TrainConfig};
use neuroevo::rng::{derive_seed, stream, tag};
use neuroevo::Error;

fn surrogate_config(n: usize, g: usize, seed: u64) -> RunConfig {
    RunConfig {
        population_size: n,
        generations: g,
        seed,
        ..RunConfig::default()
    }
}

fn desk_bounds() -> GeneBounds {
    GeneBounds {
        filter_size: Interval(1, 3),
        kernel_size: Interval(1, 2),
        feature_maps: Interval(1, 4),
        neurons: Interval(1, 16),
        mean_range: Interval(-0.1, 0.1),
        std_range: Interval(0.01, 0.3),
        max_conv_pool_layers: 3,
        max_fc_layers: 2,
    }
}

fn training_config(seed: u64) -> RunConfig {
    let mut cfg = surrogate_config(6, 2, seed);
    cfg.bounds = desk_bounds();
    cfg.fitness.k = 1;
    cfg.fitness.train = TrainConfig {
        learning_rate: 0.1,
        batch_size: 16,
        ..TrainConfig::default()
    };
    cfg.final_train = TrainConfig {
        learning_rate: 0.1,
        batch_size: 16,
        epochs: 20,
        seed: 0,
    };
    cfg
}

struct Counting {
    inner: SurrogateEvaluator,
    calls: AtomicUsize,
}

impl Evaluator for Counting {
    fn evaluate(&self, ind: &Individual) -> FitnessRecord {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.evaluate(ind)
    }
}

#[test]
fn zero_generations_return_the_evaluated_initial_population() {
    let ev = SurrogateEvaluator::default();
    let (pop, history) = run_evolution(surrogate_config(10, 0, 1), &ev, 1).unwrap();
    assert_eq!(pop.len(), 10);
    assert!(pop.iter().all(|i| i.fitness.is_some()));
    assert_eq!(history.len(), 1);
    assert_eq!(history[0].generation, 0);
}

#[test]
fn only_offspring_are_evaluated_and_best_never_regresses() {
    let ev = Counting {
        inner: SurrogateEvaluator::default(),
        calls: AtomicUsize::new(0),
    };
    let (pop, history) = run_evolution(surrogate_config(12, 8, 2), &ev, 1).unwrap();
    assert_eq!(ev.calls.load(Ordering::Relaxed), 12 + 8 * 12);
    assert_eq!(pop.len(), 12);
    assert_eq!(history.len(), 9);
    for pair in history.windows(2) {
        assert!(pair[1].best_mean_error <= pair[0].best_mean_error);
    }
}

#[test]
fn invalid_configs_fail_before_any_evaluation() {
    let ev = Counting {
        inner: SurrogateEvaluator::default(),
        calls: AtomicUsize::new(0),
    };
    assert!(run_evolution(surrogate_config(7, 1, 0), &ev, 1).is_err());
    let mut bad = surrogate_config(8, 1, 0);
    bad.selection.gamma = 0.0;
    assert!(run_evolution(bad, &ev, 1).is_err());
    assert_eq!(ev.calls.load(Ordering::Relaxed), 0);
}

#[test]
fn checkpoints_round_trip_and_detect_damage() {
    let ev = SurrogateEvaluator::default();
    let dir = tempfile::tempdir().unwrap();
    let mut evo = Evolution::new(surrogate_config(8, 3, 3), &ev, 1, Some(dir.path().into())).unwrap();
    evo.step().unwrap();
    let path = dir.path().join(CHECKPOINT_FILE);
    let loaded = Checkpoint::load(&path).unwrap();
    assert_eq!(loaded, evo.checkpoint());
    assert_eq!(loaded.state.generation, 1);

    let mut bytes = std::fs::read(&path).unwrap();
    let last = bytes.len() - 2;
    bytes[last] ^= 0x01;
    assert!(matches!(Checkpoint::from_bytes(&bytes), Err(Error::Checksum)));

    let good = std::fs::read(&path).unwrap();
    let text = String::from_utf8(good).unwrap().replacen("neuroevo-checkpoint 1 ", "neuroevo-checkpoint 7 ", 1);
    assert!(matches!(
        Checkpoint::from_bytes(text.as_bytes()),
        Err(Error::VersionMismatch { found: 7, expected: 1 })
    ));
    assert!(Checkpoint::from_bytes(b"garbage").is_err());
}

#[test]
fn resumed_run_matches_uninterrupted_run() {
    let ev = SurrogateEvaluator::default();
    let cfg = surrogate_config(10, 12, 4);
    let (full, full_history) = run_evolution(cfg.clone(), &ev, 1).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let mut first = Evolution::new(cfg, &ev, 1, Some(dir.path().into())).unwrap();
    first.run_until(7).unwrap();
    drop(first);
    let ckpt = Checkpoint::load(dir.path().join(CHECKPOINT_FILE)).unwrap();
    let resumed = Evolution::resume(ckpt, &ev, 1, None).unwrap().run().unwrap();
    assert_eq!(resumed.population, full);
    assert_eq!(resumed.history, full_history);
}

#[test]
fn output_directory_holds_logs_and_report() {
    let ev = SurrogateEvaluator::default();
    let dir = tempfile::tempdir().unwrap();
    let outcome = Evolution::new(surrogate_config(6, 3, 5), &ev, 1, Some(dir.path().into()))
        .unwrap()
        .run()
        .unwrap();
    let log = std::fs::read_to_string(dir.path().join(RUN_LOG_FILE)).unwrap();
    let records: Vec<RunRecord> = log.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(records.len(), 5);
    assert!(matches!(records[0], RunRecord::Generation(ref s) if s.generation == 0));
    assert!(matches!(records[4], RunRecord::Tiers { ref rows } if *rows == outcome.tiers));
    let evals = std::fs::read_to_string(dir.path().join(EVAL_LOG_FILE)).unwrap();
    // six initial evaluations plus six offspring per generation
    assert_eq!(evals.lines().count(), 24);
    assert!(evals.lines().all(|l| l.split('\t').count() == 6));
    let report = std::fs::read_to_string(dir.path().join(REPORT_FILE)).unwrap();
    assert!(report.contains("classification accuracy"));
    assert!(report.contains("# parameters"));
}

#[test]
fn training_runs_are_reproducible_across_worker_counts() {
    let d = make_synthetic(SyntheticKind::RectangleToy, 120, 8, 6).unwrap();
    let cfg = training_config(6);
    let data = RunData::split(&d, None, &cfg).unwrap();
    let ev = data.evaluator(&cfg);
    let (a, ha) = run_evolution(cfg.clone(), &ev, 1).unwrap();
    let (b, hb) = run_evolution(cfg, &ev, 2).unwrap();
    assert_eq!(a, b);
    assert_eq!(ha, hb);
}

#[test]
fn final_training_and_initializer_comparison() {
    let d = make_synthetic(SyntheticKind::SeparableBlobs, 300, 8, 7).unwrap();
    let test = make_synthetic(SyntheticKind::SeparableBlobs, 200, 8, 8).unwrap();
    let cfg = training_config(7);
    let data = RunData::split(&d, Some(test), &cfg).unwrap();
    let ev = data.evaluator(&cfg);
    let (pop, _) = run_evolution(cfg.clone(), &ev, 1).unwrap();
    let best = select_best(&pop, BestPick::MinError).unwrap();
    let (train, test) = data.final_sets().unwrap();
    assert_eq!(train.len(), 300);

    let (net, err) = final_train(best, &train, &test, &cfg.final_train).unwrap();
    assert!(err <= 0.05, "blobs test error {err}");
    let (again, err2) = final_train(best, &train, &test, &cfg.final_train).unwrap();
    assert_eq!(net, again);
    assert_eq!(err, err2);

    // no epochs: the freshly drawn network
    let untrained = TrainConfig {
        epochs: 0,
        ..cfg.final_train.clone()
    };
    let (net0, err0) = final_train(best, &train, &test, &untrained).unwrap();
    let seed = derive_seed(best.rng_seed, &[tag::FINAL, untrained.seed]);
    let fresh = gaussian_init::<f32, _>(&net0.spec, &mut stream(seed, &[tag::WEIGHTS])).unwrap();
    assert_eq!(net0.weights, fresh);
    assert_eq!(err0, classification_error(&net0.spec, &fresh, &test).unwrap());

    for scheme in [InitScheme::Evolved, InitScheme::Xavier] {
        let (a, b) = compare_schemes(best, scheme, scheme, &train, &test, &cfg.final_train).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn command_line_round_trip() {
    let exe = env!("CARGO_BIN_EXE_neuroevo");
    let dir = tempfile::tempdir().unwrap();
    let data_dir = dir.path().join("data");
    let run_dir = dir.path().join("run");
    let status = Command::new(exe)
        .args(["gen-data", "--kind", "rectangle-toy", "--n", "60", "--size", "8", "--out"])
        .arg(&data_dir)
        .status()
        .unwrap();
    assert!(status.success());
    let d = neuroevo::data::load_idx(data_dir.join("images.idx"), data_dir.join("labels.idx")).unwrap();
    assert_eq!(d.len(), 60);

    let config = dir.path().join("run.toml");
    std::fs::write(&config, training_config(0).to_toml()).unwrap();
    let run = |extra: &[&str]| {
        let out = Command::new(exe)
            .arg("evolve")
            .arg("--config")
            .arg(&config)
            .arg("--dataset-images")
            .arg(data_dir.join("images.idx"))
            .arg("--dataset-labels")
            .arg(data_dir.join("labels.idx"))
            .arg("--out")
            .arg(&run_dir)
            .args(extra)
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    };
    run(&["--seed", "3", "--workers", "2"]);
    let ckpt = run_dir.join(CHECKPOINT_FILE);
    assert_eq!(Checkpoint::load(&ckpt).unwrap().config.seed, 3);

    let out = Command::new(exe)
        .args(["final-train", "--policy", "min-params:0.05", "--epochs", "2", "--checkpoint"])
        .arg(&ckpt)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("test error"));

    let out = Command::new(exe)
        .args(["compare-init", "--seeds", "2", "--checkpoint"])
        .arg(&ckpt)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = std::fs::read_to_string(run_dir.join(REPORT_FILE)).unwrap();
    assert!(report.contains("initializer comparison"));
    assert!(report.contains("median xavier minus gaussian error"));

    std::fs::write(&config, "population_size = 4\nmutation_rate = 0.5\n").unwrap();
    let out = Command::new(exe)
        .arg("evolve")
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&run_dir)
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("mutation_rate"));
}

#[test]
fn idx_dataset_paths_are_required_for_training_runs() {
    let cfg = RunConfig::default();
    assert!(matches!(RunData::load(&cfg), Err(Error::Config(_))));
    let dir = tempfile::tempdir().unwrap();
    let d = make_synthetic(SyntheticKind::SeparableBlobs, 20, 4, 0).unwrap();
    write_idx(&d, dir.path().join("i"), dir.path().join("l")).unwrap();
    let mut cfg = training_config(0);
    cfg.dataset.train_images = Some(dir.path().join("i"));
    cfg.dataset.train_labels = Some(dir.path().join("l"));
    let data = RunData::load(&cfg).unwrap();
    assert_eq!((data.train.len(), data.fitness.len()), (16, 4));
    assert!(data.test.is_none());
}
