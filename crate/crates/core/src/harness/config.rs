//! Experiment configuration.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{derive_params, params_for_regime, ModelParams, Regime};
use crate::walk::{default_ratio, geometric_checkpoints, validate_checkpoints};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Simulate,
    GramLimit,
    Clt,
    MixtureClt,
    Superdiffusive,
    Lil,
    Oracle,
    Enumerate,
    MlTable,
    MlSample,
    Coefftable,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Simulate => "simulate",
            Experiment::GramLimit => "gram-limit",
            Experiment::Clt => "clt",
            Experiment::MixtureClt => "mixture-clt",
            Experiment::Superdiffusive => "superdiffusive",
            Experiment::Lil => "lil",
            Experiment::Oracle => "oracle",
            Experiment::Enumerate => "enumerate",
            Experiment::MlTable => "ml-table",
            Experiment::MlSample => "ml-sample",
            Experiment::Coefftable => "coefftable",
        }
    }

    /// Whether the experiment simulates an ensemble of walks.
    pub fn simulates(self) -> bool {
        matches!(
            self,
            Experiment::Simulate
                | Experiment::GramLimit
                | Experiment::Clt
                | Experiment::MixtureClt
                | Experiment::Superdiffusive
                | Experiment::Lil
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckpointPolicy {
    /// `round(ratio^k)` up to the horizon, which is always included.
    Geometric(f64),
    Explicit(Vec<u64>),
}

impl Default for CheckpointPolicy {
    fn default() -> Self {
        CheckpointPolicy::Geometric(default_ratio())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub dim: usize,
    /// Exactly one of `p` and `regime` selects the memory parameter.
    pub p: Option<f64>,
    pub regime: Option<Regime>,
    pub r: f64,
    pub steps: u64,
    pub trajectories: u64,
    pub seed: u64,
    pub checkpoints: CheckpointPolicy,
    /// Mittag-Leffler index for `ml-table` and `ml-sample`; defaults to `b`.
    pub alpha: Option<f64>,
    pub out: PathBuf,
    pub formats: Vec<OutputFormat>,
    /// 0 uses every available core.
    pub workers: usize,
}

pub const DEFAULT_P: f64 = 0.4;
pub const DEFAULT_R: f64 = 0.2;

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: Experiment::Simulate,
            dim: 2,
            p: None,
            regime: None,
            r: DEFAULT_R,
            steps: 1000,
            trajectories: 1000,
            seed: 1,
            checkpoints: CheckpointPolicy::default(),
            alpha: None,
            out: PathBuf::from("merws-out"),
            formats: vec![OutputFormat::Csv, OutputFormat::Json],
            workers: 0,
        }
    }
}

fn invalid(field: &str, message: impl Into<String>) -> Error {
    Error::ConfigInvalid { field: field.into(), message: message.into() }
}

impl ExperimentConfig {
    /// Model parameters, from `p` or the regime shortcut (default `p = 0.4`).
    pub fn params(&self) -> Result<ModelParams> {
        let built = match (self.p, self.regime) {
            (Some(_), Some(_)) => return Err(invalid("p", "give either p or regime, not both")),
            (None, Some(regime)) => params_for_regime(self.dim, self.r, regime),
            (p, None) => derive_params(self.dim, p.unwrap_or(DEFAULT_P), self.r),
        };
        built.map_err(|e| {
            let field = match e {
                Error::RejectsDimension(_) => "dim",
                Error::RejectsStop(_) => "r",
                _ => "p",
            };
            invalid(field, e.to_string())
        })
    }

    pub fn wants(&self, format: OutputFormat) -> bool {
        self.formats.contains(&format)
    }

    /// Checkpoint times; the superdiffusive recipe also records
    /// `steps / 10` and `steps / 100`.
    pub fn checkpoint_times(&self) -> Result<Vec<u64>> {
        let mut times = match &self.checkpoints {
            CheckpointPolicy::Geometric(ratio) => {
                if !(*ratio > 1.0 && ratio.is_finite()) {
                    return Err(invalid("ratio", format!("checkpoint ratio must exceed 1, got {ratio}")));
                }
                geometric_checkpoints(self.steps, *ratio)
            }
            CheckpointPolicy::Explicit(list) => {
                validate_checkpoints(self.steps, list).map_err(|e| invalid("checkpoints", e.to_string()))?;
                list.clone()
            }
        };
        if self.experiment == Experiment::Superdiffusive {
            times.extend([self.steps / 10, self.steps / 100, self.steps]);
            times.retain(|&t| t >= 1);
            times.sort_unstable();
            times.dedup();
        }
        if times.is_empty() {
            return Err(invalid("checkpoints", "no checkpoint inside [1, steps]"));
        }
        Ok(times)
    }

    /// Field-level validation.
    pub fn validate(&self) -> Result<()> {
        self.params()?;
        if self.steps == 0 {
            return Err(invalid("steps", "must be at least 1"));
        }
        if self.experiment.simulates() {
            if self.trajectories < 2 {
                return Err(invalid("trajectories", "must be at least 2"));
            }
            if self.steps > u32::MAX as u64 {
                return Err(invalid("steps", "horizon too large for an in-memory history"));
            }
        }
        if self.experiment == Experiment::MlSample && self.trajectories == 0 {
            return Err(invalid("trajectories", "number of draws must be positive"));
        }
        if let Some(alpha) = self.alpha {
            if !(alpha > 0.0 && alpha <= 1.0) {
                return Err(invalid("alpha", format!("must lie in (0, 1], got {alpha}")));
            }
        }
        if self.formats.is_empty() {
            return Err(invalid("format", "at least one output format is required"));
        }
        self.checkpoint_times()?;
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| invalid("config", e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
