use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::config::{BestPick, RunConfig};
use super::driver::RunState;
use crate::genome::Individual;
use crate::selection::elite_order;
use crate::{Error, Result};

/// Picks the individual to train in full.
///
/// `MinError` takes the lowest mean error (fewer parameters on ties);
/// `MinParamsWithinTolerance(tol)` takes the smallest network whose mean
/// error is within `tol` of the best.
pub fn select_best(pop: &[Individual], policy: BestPick) -> Result<&Individual> {
    if pop.is_empty() {
        return Err(Error::InsufficientCandidates { needed: 1, got: 0 });
    }
    let mut best = &pop[0];
    for ind in pop {
        ind.fitness()?;
        if elite_order(ind, best).is_lt() {
            best = ind;
        }
    }
    let BestPick::MinParamsWithinTolerance(tol) = policy else {
        return Ok(best);
    };
    let limit = best.fitness()?.mean_error + tol;
    let mut pick = best;
    for ind in pop {
        let (f, p) = (ind.fitness()?, pick.fitness()?);
        if f.mean_error <= limit && (f.param_count, f.mean_error, ind.id) < (p.param_count, p.mean_error, pick.id) {
            pick = ind;
        }
    }
    Ok(pick)
}

/// One column of the accuracy/parameter table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TierRow {
    /// Accuracy threshold in whole percent.
    pub accuracy_pct: i64,
    pub individual_id: u64,
    pub mean_error: f64,
    pub param_count: u64,
}

/// Accuracy tiers one percent apart, starting at the best accuracy rounded
/// down. Each tier lists the smallest network reaching at least that
/// accuracy (accuracy being `1 - mean_error` on the fitness split).
pub fn tier_table(pop: &[Individual], tiers: usize) -> Result<Vec<TierRow>> {
    let fits = pop
        .iter()
        .map(|i| i.fitness().map(|f| (i, f)))
        .collect::<Result<Vec<_>>>()?;
    let best_error = fits
        .iter()
        .map(|(_, f)| f.mean_error)
        .fold(f64::INFINITY, f64::min);
    if !best_error.is_finite() {
        return Err(Error::InsufficientCandidates { needed: 1, got: 0 });
    }
    // the epsilon keeps 0.95 from landing in the 94% tier
    let pct = |err: f64| (1.0 - err) * 100.0 + 1e-9;
    let top = pct(best_error).floor() as i64;
    let mut rows = Vec::with_capacity(tiers);
    for t in 0..tiers as i64 {
        let threshold = top - t;
        if threshold < 0 {
            break;
        }
        let (ind, f) = fits
            .iter()
            .filter(|(_, f)| pct(f.mean_error) >= threshold as f64)
            .min_by(|(a, fa), (b, fb)| {
                fa.param_count
                    .cmp(&fb.param_count)
                    .then(fa.mean_error.total_cmp(&fb.mean_error))
                    .then(a.id.cmp(&b.id))
            })
            .expect("the best individual reaches every tier");
        rows.push(TierRow {
            accuracy_pct: threshold,
            individual_id: ind.id,
            mean_error: f.mean_error,
            param_count: f.param_count,
        });
    }
    Ok(rows)
}

/// Largest over smallest parameter count in the table.
pub fn param_spread(rows: &[TierRow]) -> f64 {
    let max = rows.iter().map(|r| r.param_count).max().unwrap_or(0);
    let min = rows.iter().map(|r| r.param_count).min().unwrap_or(0);
    if min == 0 {
        return f64::NAN;
    }
    max as f64 / min as f64
}

/// Two-row table: accuracy thresholds over parameter counts.
pub fn format_tier_table(rows: &[TierRow]) -> String {
    let cells: Vec<(String, String)> = rows
        .iter()
        .map(|r| (format!("{}%", r.accuracy_pct), r.param_count.to_string()))
        .collect();
    let width = cells
        .iter()
        .map(|(a, p)| a.len().max(p.len()))
        .max()
        .unwrap_or(0);
    let mut acc = format!("{:<24}", "classification accuracy");
    let mut params = format!("{:<24}", "# parameters");
    for (a, p) in &cells {
        write!(acc, " | {a:>width$}").unwrap();
        write!(params, " | {p:>width$}").unwrap();
    }
    format!("{acc}\n{params}\n")
}

pub fn render_report(config: &RunConfig, state: &RunState, tiers: &[TierRow]) -> Result<String> {
    let mut out = String::new();
    writeln!(
        out,
        "population {}  generations {}/{}  seed {}",
        config.population_size, state.generation, config.generations, config.seed
    )
    .unwrap();
    writeln!(out, "\ngeneration  best_error  mean_error  worst_error  best_params").unwrap();
    for s in &state.history {
        writeln!(
            out,
            "{:>10}  {:>10.4}  {:>10.4}  {:>11.4}  {:>11}",
            s.generation, s.best_mean_error, s.mean_mean_error, s.worst_mean_error, s.best_param_count
        )
        .unwrap();
    }
    writeln!(out, "\n{}", format_tier_table(tiers)).unwrap();
    writeln!(out, "parameter spread across tiers: {:.1}x", param_spread(tiers)).unwrap();
    let best = select_best(&state.population, config.best_pick)?;
    let f = best.fitness()?;
    writeln!(
        out,
        "\nselected ({}): id {}  mean_error {:.4}  std_error {:.4}  params {}",
        config.best_pick, best.id, f.mean_error, f.std_error, f.param_count
    )
    .unwrap();
    out.push_str(&best.chromosome.to_text());
    Ok(out)
}
