use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::genome::GeneBounds;
use crate::network::TrainConfig;
use crate::selection::SelectionConfig;
use crate::variation::VariationConfig;
use crate::{Error, Result};

/// Everything that determines a run. Serialized as TOML with these exact
/// field names; unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub population_size: usize,
    pub generations: usize,
    pub seed: u64,
    pub bounds: GeneBounds,
    pub variation: VariationConfig,
    pub selection: SelectionConfig,
    pub fitness: FitnessConfig,
    pub final_train: TrainConfig,
    pub dataset: DatasetConfig,
    pub best_pick: BestPick,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            population_size: 100,
            generations: 100,
            seed: 0,
            bounds: GeneBounds::default(),
            variation: VariationConfig::default(),
            selection: SelectionConfig::default(),
            fitness: FitnessConfig::default(),
            final_train: TrainConfig {
                epochs: 100,
                ..TrainConfig::default()
            },
            dataset: DatasetConfig::default(),
            best_pick: BestPick::MinError,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitnessConfig {
    /// Truncated-training epochs per evaluation.
    pub k: usize,
    /// Share of the training images held out for fitness scoring.
    pub fitness_fraction: f64,
    pub train: TrainConfig,
}

impl Default for FitnessConfig {
    fn default() -> Self {
        Self {
            k: 5,
            fitness_fraction: 0.2,
            train: TrainConfig::default(),
        }
    }
}

/// IDX files. Without a test pair, final training scores on the fitness split.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub train_images: Option<PathBuf>,
    pub train_labels: Option<PathBuf>,
    pub test_images: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
}

/// How the final individual is chosen from the last population.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum BestPick {
    /// Lowest mean error, ties to fewer parameters.
    MinError,
    /// Fewest parameters among those within `tol` of the best mean error.
    MinParamsWithinTolerance(f64),
}

impl fmt::Display for BestPick {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BestPick::MinError => f.write_str("min-error"),
            BestPick::MinParamsWithinTolerance(tol) => write!(f, "min-params:{tol}"),
        }
    }
}

impl TryFrom<String> for BestPick {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<BestPick> for String {
    fn from(p: BestPick) -> String {
        p.to_string()
    }
}

impl FromStr for BestPick {
    type Err = Error;

    /// `min-error` or `min-params:<tol>`.
    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            None if s == "min-error" => Ok(BestPick::MinError),
            Some(("min-params", tol)) => tol
                .parse::<f64>()
                .ok()
                .filter(|t| *t >= 0.0)
                .map(BestPick::MinParamsWithinTolerance)
                .ok_or_else(|| Error::Config(format!("bad tolerance in `{s}`"))),
            _ => Err(Error::Config(format!(
                "policy `{s}` is not `min-error` or `min-params:<tol>`"
            ))),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let n = self.population_size;
        if n < 2 || n % 2 == 1 {
            return Err(Error::Config(format!(
                "population size {n} must be even and at least 2"
            )));
        }
        self.bounds.validate()?;
        self.variation.validate()?;
        self.selection.validate()?;
        if self.fitness.k == 0 {
            return Err(Error::Config("fitness.k must be at least 1".into()));
        }
        let f = self.fitness.fitness_fraction;
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::Config(format!("fitness_fraction {f} not in (0, 1)")));
        }
        self.fitness.train.validate()?;
        self.final_train.validate()?;
        if let BestPick::MinParamsWithinTolerance(t) = self.best_pick {
            if !(t >= 0.0) {
                return Err(Error::Config("best_pick tolerance must be >= 0".into()));
            }
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        assert_eq!((cfg.population_size, cfg.generations), (100, 100));
        let back = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_are_errors() {
        assert!(RunConfig::from_toml("population_size = 10\nmutation_rate = 0.3\n").is_err());
        assert!(RunConfig::from_toml("[selection]\nalpha = 0.1\ndelta = 2\n").is_err());
        let ok = RunConfig::from_toml("population_size = 10\n[selection]\nalpha = 0.1\n").unwrap();
        assert_eq!(ok.population_size, 10);
        assert_eq!(ok.selection.alpha, 0.1);
        assert_eq!(ok.selection.gamma, 0.2);
    }

    #[test]
    fn odd_population_rejected() {
        assert!(RunConfig::from_toml("population_size = 11\n").is_err());
    }

    #[test]
    fn policies_parse() {
        assert_eq!("min-error".parse::<BestPick>().unwrap(), BestPick::MinError);
        assert_eq!(
            "min-params:0.005".parse::<BestPick>().unwrap(),
            BestPick::MinParamsWithinTolerance(0.005)
        );
        assert!("min-params".parse::<BestPick>().is_err());
        assert!("fastest".parse::<BestPick>().is_err());
        let cfg = RunConfig::from_toml("best_pick = \"min-params:0.01\"\n").unwrap();
        assert_eq!(cfg.best_pick, BestPick::MinParamsWithinTolerance(0.01));
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        assert!(RunConfig::from_toml("best_pick = \"min-params:-1\"\n").is_err());
    }
}
