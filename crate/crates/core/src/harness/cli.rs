//! `merws` command line.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use super::config::{CheckpointPolicy, Experiment, ExperimentConfig, OutputFormat};
use super::recipes::{run, verify_all, RunOutcome, VerifyAllOptions};
use crate::error::{Error, Result};
use crate::model::Regime;
use crate::stats::format_table;

/// Exit status when a check fails.
pub const EXIT_CHECK_FAILED: u8 = 1;
/// Exit status on invalid input or an I/O failure.
pub const EXIT_ERROR: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "merws", version, about = "Elephant random walk with stops: simulation and verification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one experiment, optionally from a JSON config file.
    Run {
        #[arg(long, value_enum)]
        experiment: Option<Experiment>,
        /// JSON config; command-line flags override its fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run every check on one parameter set per regime.
    VerifyAll(VerifyArgs),
    /// Simulate an ensemble and check the martingale identity.
    Simulate(CommonArgs),
    /// Exact second moments on the checkpoint grid.
    Oracle(CommonArgs),
    /// Exact joint law by enumeration (small d and n).
    Enumerate(CommonArgs),
    /// Mittag-Leffler density, function and moments.
    MlTable(CommonArgs),
    /// Mittag-Leffler draws.
    MlSample(CommonArgs),
    /// Normalizing coefficients a_n, b_n, alpha_n and v_n.
    Coefftable(CommonArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long, conflicts_with = "regime")]
    pub p: Option<f64>,
    #[arg(long)]
    pub r: Option<f64>,
    #[arg(long, value_parser = parse_regime)]
    pub regime: Option<Regime>,
    #[arg(long)]
    pub steps: Option<u64>,
    /// Ensemble size, or the number of draws for `ml-sample`.
    #[arg(long)]
    pub trajectories: Option<u64>,
    #[arg(long, env = "MERWS_SEED")]
    pub seed: Option<u64>,
    /// Explicit checkpoint times, comma separated.
    #[arg(long, value_delimiter = ',', conflicts_with = "ratio")]
    pub checkpoints: Option<Vec<u64>>,
    /// Ratio of the geometric checkpoint grid.
    #[arg(long)]
    pub ratio: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, value_delimiter = ',')]
    pub format: Option<Vec<OutputFormat>>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Mittag-Leffler index for `ml-table` and `ml-sample`.
    #[arg(long)]
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 1_000_000)]
    pub steps: u64,
    #[arg(long, default_value_t = 10_000)]
    pub trajectories: u64,
    #[arg(long, env = "MERWS_SEED", default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub ratio: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
    #[arg(long, default_value = "merws-verify")]
    pub out: PathBuf,
    #[arg(long, value_enum, value_delimiter = ',')]
    pub format: Option<Vec<OutputFormat>>,
}

fn parse_regime(s: &str) -> std::result::Result<Regime, String> {
    s.parse::<Regime>().map_err(|e| e.to_string())
}

impl CommonArgs {
    /// Overrides the fields of `base` that were given on the command line.
    pub fn apply(&self, mut base: ExperimentConfig) -> ExperimentConfig {
        if let Some(v) = self.dim {
            base.dim = v;
        }
        if let Some(v) = self.p {
            base.p = Some(v);
            base.regime = None;
        }
        if let Some(v) = self.regime {
            base.regime = Some(v);
            base.p = None;
        }
        if let Some(v) = self.r {
            base.r = v;
        }
        if let Some(v) = self.steps {
            base.steps = v;
        }
        if let Some(v) = self.trajectories {
            base.trajectories = v;
        }
        if let Some(v) = self.seed {
            base.seed = v;
        }
        if let Some(v) = &self.checkpoints {
            base.checkpoints = CheckpointPolicy::Explicit(v.clone());
        }
        if let Some(v) = self.ratio {
            base.checkpoints = CheckpointPolicy::Geometric(v);
        }
        if let Some(v) = &self.out {
            base.out = v.clone();
        }
        if let Some(v) = &self.format {
            base.formats = v.clone();
        }
        if let Some(v) = self.workers {
            base.workers = v;
        }
        if let Some(v) = self.alpha {
            base.alpha = Some(v);
        }
        base
    }
}

fn experiment_config(experiment: Option<Experiment>, config: Option<&PathBuf>, common: &CommonArgs) -> Result<ExperimentConfig> {
    let mut base = match config {
        Some(path) => ExperimentConfig::from_json(&std::fs::read_to_string(path)?)?,
        None => ExperimentConfig::default(),
    };
    if let Some(e) = experiment {
        base.experiment = e;
    } else if config.is_none() {
        return Err(Error::ConfigInvalid { field: "experiment".into(), message: "give --experiment or --config".into() });
    }
    Ok(common.apply(base))
}

/// Executes a parsed command.
pub fn execute(cli: &Cli) -> Result<RunOutcome> {
    let with = |e: Experiment, c: &CommonArgs| run(&c.apply(ExperimentConfig { experiment: e, ..Default::default() }));
    match &cli.command {
        Command::Run { experiment, config, common } => run(&experiment_config(*experiment, config.as_ref(), common)?),
        Command::VerifyAll(v) => {
            let defaults = VerifyAllOptions::default();
            let ratio = v.ratio.unwrap_or(defaults.ratio);
            if !(ratio > 1.0 && ratio.is_finite()) {
                return Err(Error::ConfigInvalid { field: "ratio".into(), message: format!("checkpoint ratio must exceed 1, got {ratio}") });
            }
            if v.trajectories < 2 {
                return Err(Error::ConfigInvalid { field: "trajectories".into(), message: "must be at least 2".into() });
            }
            if v.steps == 0 || v.steps > u32::MAX as u64 {
                return Err(Error::ConfigInvalid { field: "steps".into(), message: format!("must lie in [1, {}]", u32::MAX) });
            }
            verify_all(&VerifyAllOptions {
                steps: v.steps,
                trajectories: v.trajectories,
                seed: v.seed,
                ratio,
                workers: v.workers,
                out: v.out.clone(),
                formats: v.format.clone().unwrap_or(defaults.formats.clone()),
                ..defaults
            })
        }
        Command::Simulate(c) => with(Experiment::Simulate, c),
        Command::Oracle(c) => with(Experiment::Oracle, c),
        Command::Enumerate(c) => with(Experiment::Enumerate, c),
        Command::MlTable(c) => with(Experiment::MlTable, c),
        Command::MlSample(c) => with(Experiment::MlSample, c),
        Command::Coefftable(c) => with(Experiment::Coefftable, c),
    }
}

/// Entry point of the `merws` binary.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(outcome) => {
            if !outcome.reports.is_empty() {
                print!("{}", format_table(&outcome.reports));
            }
            for s in &outcome.skipped {
                println!("skipped {s}");
            }
            if outcome.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_CHECK_FAILED)
            }
        }
        Err(e) => {
            eprintln!("merws: {e}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn flags_override_config() {
        let cli = Cli::try_parse_from([
            "merws", "run", "--experiment", "clt", "--regime", "critical", "--steps", "500", "--checkpoints", "10,500",
            "--format", "json",
        ])
        .unwrap();
        let Command::Run { experiment, config, common } = &cli.command else { panic!() };
        let c = experiment_config(*experiment, config.as_ref(), common).unwrap();
        assert_eq!(c.experiment, Experiment::Clt);
        assert_eq!(c.regime, Some(Regime::Critical));
        assert_eq!(c.p, None);
        assert_eq!(c.steps, 500);
        assert_eq!(c.checkpoints, CheckpointPolicy::Explicit(vec![10, 500]));
        assert_eq!(c.formats, vec![OutputFormat::Json]);
    }

    #[test]
    fn p_and_regime_conflict() {
        assert!(Cli::try_parse_from(["merws", "simulate", "--p", "0.4", "--regime", "critical"]).is_err());
    }

    #[test]
    fn run_needs_an_experiment() {
        let cli = Cli::try_parse_from(["merws", "run"]).unwrap();
        assert!(matches!(execute(&cli), Err(Error::ConfigInvalid { .. })));
    }
}
