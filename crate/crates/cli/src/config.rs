//! JSON run configuration.
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "experiment": "ramsey",
//!   "grid": [0.0, 0.1, 0.2],
//!   "ansatz": ["full", "ghz_reference"],
//!   "seed": 7,
//!   "optimizer": { "steps": 1000, "step_size": 0.05, "update": "adam", "log_cost": true, "restarts": 8 },
//!   "warm_start": true,
//!   "out": "ramsey.csv"
//! }
//! ```
//!
//! Every key except `schema_version` and `experiment` is optional; unknown
//! keys are an error. `update` is `"gradient"` or `"adam"`; Adam takes
//! every step, so it needs `"backoff": null`. `"persistent_backoff": true`
//! keeps the shrunken step size after an accepted step instead of resetting
//! it. `log_cost` descends on `ln C`. `warm_start` adds one descent per
//! point started from the best noiseless parameters of the same ansatz.
//! Ramsey defaults to Adam on `ln C` with warm starts, NV to plain steps
//! with backoff 0.7 and cold starts only.

use std::path::{Path, PathBuf};

use qmetro::experiments::{NvPrep, RamseyAnsatz, NV_ENCODING_DEPHASING};
use qmetro::optimize::{OptimizerConfig, Update, DEFAULT_RESTARTS, DEFAULT_STEPS};
use serde::{Deserialize, Deserializer, Serialize};

use crate::{CliError, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Ramsey,
    Nv,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Ramsey => "ramsey",
            Experiment::Nv => "nv",
        }
    }

    fn noise_range(self) -> (f64, f64) {
        match self {
            Experiment::Ramsey => (0.0, 0.5),
            Experiment::Nv => (0.0, 0.1),
        }
    }

    fn noise_field(self) -> &'static str {
        match self {
            Experiment::Ramsey => "dephasing probability p",
            Experiment::Nv => "gate depolarization p_g",
        }
    }
}

/// Circuit family optimized (or evaluated) at each grid point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Ansatz {
    Ramsey(RamseyAnsatz),
    Nv(NvPrep),
}

impl Ansatz {
    pub fn name(self) -> &'static str {
        match self {
            Ansatz::Ramsey(a) => a.name(),
            Ansatz::Nv(p) => p.name(),
        }
    }

    pub fn tag(self) -> u64 {
        match self {
            Ansatz::Ramsey(RamseyAnsatz::Full) => 1,
            Ansatz::Ramsey(RamseyAnsatz::GhzReference) => 2,
            Ansatz::Ramsey(RamseyAnsatz::LocalReference) => 3,
            Ansatz::Nv(NvPrep::Local) => 11,
            Ansatz::Nv(NvPrep::ShallowEntangled) => 12,
        }
    }

    pub fn is_fixed(self) -> bool {
        matches!(self, Ansatz::Ramsey(a) if a.is_fixed())
    }

    pub fn parse(experiment: Experiment, name: &str) -> Result<Self> {
        let found = match experiment {
            Experiment::Ramsey => [RamseyAnsatz::Full, RamseyAnsatz::GhzReference, RamseyAnsatz::LocalReference]
                .into_iter()
                .find(|a| a.name() == name)
                .map(Ansatz::Ramsey),
            Experiment::Nv => [NvPrep::Local, NvPrep::ShallowEntangled]
                .into_iter()
                .find(|a| a.name() == name)
                .map(Ansatz::Nv),
        };
        found.ok_or_else(|| {
            CliError::Validation(format!(
                "field `ansatz`: unknown {} ansatz `{name}`",
                experiment.name()
            ))
        })
    }

    pub fn all(experiment: Experiment) -> Vec<Self> {
        match experiment {
            Experiment::Ramsey => vec![
                Ansatz::Ramsey(RamseyAnsatz::Full),
                Ansatz::Ramsey(RamseyAnsatz::GhzReference),
                Ansatz::Ramsey(RamseyAnsatz::LocalReference),
            ],
            Experiment::Nv => vec![Ansatz::Nv(NvPrep::Local), Ansatz::Nv(NvPrep::ShallowEntangled)],
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSection {
    pub steps: Option<usize>,
    pub step_size: Option<f64>,
    #[serde(default, deserialize_with = "present")]
    pub backoff: Option<Option<f64>>,
    pub persistent_backoff: Option<bool>,
    pub log_cost: Option<bool>,
    pub update: Option<Update>,
    pub restarts: Option<usize>,
}

/// Distinguishes an explicit `null` from an absent key.
fn present<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<Option<f64>>, D::Error> {
    Option::<f64>::deserialize(d).map(Some)
}

/// The document as written.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub schema_version: u32,
    pub experiment: Experiment,
    pub grid: Option<Vec<f64>>,
    pub ansatz: Option<Vec<String>>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub optimizer: OptimizerSection,
    pub encoding_dephasing: Option<f64>,
    pub warm_start: Option<bool>,
    pub out: Option<PathBuf>,
}

/// A validated sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub experiment: Experiment,
    /// Ascending, no duplicates.
    pub grid: Vec<f64>,
    /// Canonical order, no duplicates.
    pub ansatz: Vec<Ansatz>,
    pub optimizer: OptimizerConfig,
    pub encoding_dephasing: f64,
    pub warm_start: bool,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn seed(&self) -> u64 {
        self.optimizer.seed
    }

    /// Built-in sweep used when no config file is given.
    pub fn default_for(experiment: Experiment) -> Self {
        let raw = RawConfig {
            schema_version: SCHEMA_VERSION,
            experiment,
            grid: None,
            ansatz: None,
            seed: None,
            optimizer: OptimizerSection::default(),
            encoding_dephasing: None,
            warm_start: None,
            out: None,
        };
        Self::from_raw(raw).expect("defaults are valid")
    }

    pub fn from_raw(raw: RawConfig) -> Result<Self> {
        if raw.schema_version != SCHEMA_VERSION {
            return Err(CliError::Validation(format!(
                "field `schema_version`: expected {SCHEMA_VERSION}, found {}",
                raw.schema_version
            )));
        }
        let experiment = raw.experiment;
        let mut grid = raw.grid.unwrap_or_else(|| match experiment {
            Experiment::Ramsey => (0..=10).map(|i| (45 * i) as f64 / 1000.0).collect(),
            Experiment::Nv => (0..=4).map(|i| (25 * i) as f64 / 1000.0).collect(),
        });
        if grid.is_empty() {
            return Err(CliError::Validation("field `grid`: must contain at least one value".into()));
        }
        let (lo, hi) = experiment.noise_range();
        if let Some(bad) = grid.iter().find(|v| !(lo..=hi).contains(*v)) {
            return Err(CliError::Validation(format!(
                "field `grid`: {} {bad} outside [{lo}, {hi}]",
                experiment.noise_field()
            )));
        }
        grid.sort_by(f64::total_cmp);
        if grid.windows(2).any(|w| w[0] == w[1]) {
            return Err(CliError::Validation("field `grid`: duplicate values".into()));
        }

        let mut ansatz = match raw.ansatz {
            Some(names) => names
                .iter()
                .map(|n| Ansatz::parse(experiment, n))
                .collect::<Result<Vec<_>>>()?,
            None => Ansatz::all(experiment),
        };
        if ansatz.is_empty() {
            return Err(CliError::Validation("field `ansatz`: must name at least one ansatz".into()));
        }
        ansatz.sort();
        if ansatz.windows(2).any(|w| w[0] == w[1]) {
            return Err(CliError::Validation("field `ansatz`: duplicate entries".into()));
        }

        let seed = raw.seed.unwrap_or(0);
        let base = match experiment {
            Experiment::Ramsey => OptimizerConfig::ramsey(seed),
            Experiment::Nv => OptimizerConfig::nv(seed),
        };
        let o = raw.optimizer;
        let optimizer = OptimizerConfig {
            steps: o.steps.unwrap_or(DEFAULT_STEPS),
            step_size: o.step_size.unwrap_or(base.step_size),
            backoff: o.backoff.unwrap_or(base.backoff),
            persistent_backoff: o.persistent_backoff.unwrap_or(base.persistent_backoff),
            log_cost: o.log_cost.unwrap_or(base.log_cost),
            update: o.update.unwrap_or(base.update),
            restarts: o.restarts.unwrap_or(DEFAULT_RESTARTS),
            seed,
        };
        optimizer
            .validate()
            .map_err(|e| CliError::Validation(format!("field `optimizer`: {e}")))?;

        if raw.encoding_dephasing.is_some() && experiment == Experiment::Ramsey {
            return Err(CliError::Validation(
                "field `encoding_dephasing`: only applies to the nv experiment".into(),
            ));
        }
        let encoding_dephasing = raw.encoding_dephasing.unwrap_or(NV_ENCODING_DEPHASING);
        if !(0.0..=1.0).contains(&encoding_dephasing) {
            return Err(CliError::Validation(format!(
                "field `encoding_dephasing`: {encoding_dephasing} outside [0, 1]"
            )));
        }

        Ok(Self {
            experiment,
            grid,
            ansatz,
            optimizer,
            encoding_dephasing,
            warm_start: raw.warm_start.unwrap_or(experiment == Experiment::Ramsey),
            out: raw.out,
        })
    }
}

/// Parses and validates a config document. JSON errors carry line and column.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let raw: RawConfig = serde_json::from_str(text).map_err(|e| CliError::Validation(e.to_string()))?;
    RunConfig::from_raw(raw)
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_config(&text).map_err(|e| match e {
        CliError::Validation(msg) => CliError::Validation(format!("{}: {msg}", path.display())),
        other => other,
    })
}
