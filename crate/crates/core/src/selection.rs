//! Slack binary tournament and elitist environmental selection.

use std::cmp::Ordering;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::fitness::FitnessRecord;
use crate::genome::Individual;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectionConfig {
    /// Mean-error gap above which the lower-error entrant wins outright.
    pub alpha: f64,
    /// Parameter-count gap (in weights) above which the smaller network wins.
    pub beta: f64,
    /// Fraction of the next population reserved for the best-mean individuals.
    pub gamma: f64,
    /// Return the *larger*-mean entrant on the alpha branch instead.
    pub literal_alpha_branch: bool,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            alpha: 0.01,
            beta: 100_000.0,
            gamma: 0.2,
            literal_alpha_branch: false,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.beta >= 0.0) {
            return Err(Error::Config("alpha and beta must be non-negative".into()));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config(format!("gamma {} not in (0, 1]", self.gamma)));
        }
        Ok(())
    }

    /// Elite count for a population of `n`: `round(gamma * n)`, at least 1.
    pub fn elite_count(&self, n: usize) -> usize {
        ((self.gamma * n as f64).round() as usize).clamp(1, n.max(1))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Entrant {
    First,
    Second,
}

/// Which comparison settled a tournament.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    Mean,
    Params,
    Std,
    Coin,
}

/// Decides a tournament between two fitness records. `coin` is consulted
/// only when every comparison ties.
pub fn tournament_winner(
    a: &FitnessRecord,
    b: &FitnessRecord,
    cfg: &SelectionConfig,
    coin: impl FnOnce() -> bool,
) -> (Entrant, Branch) {
    // hi: larger mean error; on equal means the larger network, then the
    // first entrant.
    let a_is_hi = match a.mean_error.total_cmp(&b.mean_error) {
        Ordering::Equal => a.param_count >= b.param_count,
        o => o == Ordering::Greater,
    };
    let (hi, lo, hi_is) = if a_is_hi {
        (a, b, Entrant::First)
    } else {
        (b, a, Entrant::Second)
    };
    let lo_is = match hi_is {
        Entrant::First => Entrant::Second,
        Entrant::Second => Entrant::First,
    };
    if hi.mean_error - lo.mean_error > cfg.alpha {
        let w = if cfg.literal_alpha_branch { hi_is } else { lo_is };
        return (w, Branch::Mean);
    }
    if hi.param_count as f64 - lo.param_count as f64 > cfg.beta {
        return (lo_is, Branch::Params);
    }
    match hi.std_error.partial_cmp(&lo.std_error) {
        Some(Ordering::Less) => (hi_is, Branch::Std),
        Some(Ordering::Greater) => (lo_is, Branch::Std),
        _ => {
            let w = if coin() { Entrant::First } else { Entrant::Second };
            (w, Branch::Coin)
        }
    }
}

/// Slack binary tournament between two evaluated individuals.
pub fn slack_tournament<'a, R: Rng + ?Sized>(
    a: &'a Individual,
    b: &'a Individual,
    cfg: &SelectionConfig,
    rng: &mut R,
) -> Result<&'a Individual> {
    let (fa, fb) = (a.fitness()?, b.fitness()?);
    Ok(match tournament_winner(fa, fb, cfg, || rng.random_bool(0.5)).0 {
        Entrant::First => a,
        Entrant::Second => b,
    })
}

fn distinct_pair<R: Rng + ?Sized>(n: usize, rng: &mut R) -> (usize, usize) {
    let i = rng.random_range(0..n);
    let j = rng.random_range(0..n - 1);
    (i, if j >= i { j + 1 } else { j })
}

fn require_evaluated(pop: &[Individual]) -> Result<()> {
    pop.iter().try_for_each(|i| i.fitness().map(|_| ()))
}

/// `|pop|` winners of independent tournaments between distinct, uniformly
/// drawn entrants.
pub fn fill_mating_pool<R: Rng + ?Sized>(
    pop: &[Individual],
    cfg: &SelectionConfig,
    rng: &mut R,
) -> Result<Vec<Individual>> {
    if pop.len() < 2 {
        return Err(Error::InsufficientCandidates {
            needed: 2,
            got: pop.len(),
        });
    }
    require_evaluated(pop)?;
    (0..pop.len())
        .map(|_| {
            let (i, j) = distinct_pair(pop.len(), rng);
            slack_tournament(&pop[i], &pop[j], cfg, rng).cloned()
        })
        .collect()
}

/// Orders by mean error, then parameter count, then error std, then id.
pub fn elite_order(a: &Individual, b: &Individual) -> Ordering {
    let (fa, fb) = (a.fitness.as_ref(), b.fitness.as_ref());
    let key = |f: Option<&FitnessRecord>| {
        f.map_or((f64::INFINITY, u64::MAX, f64::INFINITY), |f| {
            (f.mean_error, f.param_count, f.std_error)
        })
    };
    let (ka, kb) = (key(fa), key(fb));
    ka.0.total_cmp(&kb.0)
        .then(ka.1.cmp(&kb.1))
        .then(ka.2.total_cmp(&kb.2))
        .then(a.id.cmp(&b.id))
}

/// Picks the next population of `n` from parents and offspring: the
/// `round(gamma * n)` best by mean error are kept and removed from the pool,
/// then the remaining slots are filled by tournaments over what is left.
/// Tournament winners stay in the pool and may be picked again.
pub fn environmental_selection<R: Rng + ?Sized>(
    mut candidates: Vec<Individual>,
    n: usize,
    cfg: &SelectionConfig,
    rng: &mut R,
) -> Result<Vec<Individual>> {
    if candidates.len() < n || n == 0 {
        return Err(Error::InsufficientCandidates {
            needed: n.max(1),
            got: candidates.len(),
        });
    }
    require_evaluated(&candidates)?;
    candidates.sort_by(elite_order);
    let elites = cfg.elite_count(n);
    let rest = candidates.split_off(elites);
    let mut next = candidates;
    while next.len() < n {
        let pick = if rest.len() == 1 {
            &rest[0]
        } else {
            let (i, j) = distinct_pair(rest.len(), rng);
            slack_tournament(&rest[i], &rest[j], cfg, rng)?
        };
        next.push(pick.clone());
    }
    Ok(next)
}
