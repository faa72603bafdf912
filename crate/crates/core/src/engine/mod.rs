//! Evolution driver, checkpoints, configuration, reporting and final training.

mod checkpoint;
mod config;
mod driver;
mod final_train;
mod report;

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use config::{BestPick, DatasetConfig, FitnessConfig, RunConfig};
pub use driver::{
    run_evolution, Evolution, GenerationStats, RunOutcome, RunRecord, RunState, CHECKPOINT_FILE, EVAL_LOG_FILE,
    REPORT_FILE, REPORT_TIERS, RUN_LOG_FILE,
};
pub use final_train::{
    compare_initializers, compare_schemes, final_train, train_with_init, InitComparison, InitScheme, RunData,
    TrainedNetwork,
};
pub use report::{format_tier_table, param_spread, render_report, select_best, tier_table, TierRow};
