//! Experiment recipes: simulate, check, and write artifacts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;

use super::config::{Experiment, ExperimentConfig, OutputFormat};
use super::output::{self, METADATA_FILE, REPORT_FILE, SUMMARY_FILE, TRAJECTORIES_FILE};
use crate::coefficients::{vn_sequence, CoeffTable};
use crate::error::Result;
use crate::mittag::{ml_function, ml_moment, ml_pdf, ml_sample};
use crate::model::{derive_params, ModelParams, Regime};
use crate::oracle::{enumerate_distribution, expected_outer, expected_outer_grid, outer_closed_form};
use crate::rng::{stream, stream_seed, GENERATOR_NAME};
use crate::stats::estimate::mean_estimate;
use crate::stats::verify::{self, SE_BAND};
use crate::stats::{
    all_pass, ensemble_run, lil_monitor, verify_clt, verify_gram_limit, verify_martingale, verify_mixture_clt,
    verify_second_moments, verify_superdiffusive, EnsembleSummary, TestReport,
};
use crate::walk::geometric_checkpoints;

/// Reference draws for the Mittag-Leffler KS check.
pub const ML_REFERENCE_DRAWS: usize = 1_000_000;
/// Tolerance for identities between exact computations.
pub const EXACT_TOL: f64 = 1e-12;
/// Relative tolerance between the moment recursion and its closed form.
pub const CLOSED_FORM_REL_TOL: f64 = 1e-9;
/// Offset of the stream indices that seed the `verify-all` parameter sets.
pub const SET_SEED_BASE: u64 = 1 << 62;

/// Reports of a finished run, plus checks skipped for lack of horizon.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunOutcome {
    pub reports: Vec<TestReport>,
    pub skipped: Vec<String>,
}

impl RunOutcome {
    /// True when every non-qualitative check passed.
    pub fn passed(&self) -> bool {
        all_pass(&self.reports)
    }
}

#[derive(Serialize)]
struct Metadata<'a, C: Serialize> {
    command: &'a str,
    config: &'a C,
    generator: &'a str,
    code_version: &'a str,
    started_unix_seconds: u64,
    wall_clock_seconds: f64,
    tolerances: BTreeMap<&'static str, f64>,
    skipped: &'a [String],
}

/// Every tolerance used by the checks.
pub fn tolerances() -> BTreeMap<&'static str, f64> {
    use verify::*;
    BTreeMap::from([
        ("se_band", SE_BAND),
        ("gram_share_abs", GRAM_SHARE_TOL),
        ("ml_moment2_rel", ML_MOMENT2_REL_TOL),
        ("ml_moment3_rel", ML_MOMENT3_REL_TOL),
        ("ml_ks", ML_KS_TOL),
        ("diffusive_variance_rel", DIFFUSIVE_VAR_REL_TOL),
        ("critical_variance_rel", CRITICAL_VAR_REL_TOL),
        ("clt_ks", CLT_KS_TOL),
        ("diffusive_mixture_rel", DIFFUSIVE_MIXTURE_REL_TOL),
        ("critical_mixture_rel", CRITICAL_MIXTURE_REL_TOL),
        ("limit_covariance_rel", L_COVARIANCE_REL_TOL),
        ("fluctuation_ks", FLUCTUATION_KS_TOL),
        ("lil_band_lo", LIL_BAND.0),
        ("lil_band_hi", LIL_BAND.1),
        ("exact_abs", EXACT_TOL),
        ("closed_form_rel", CLOSED_FORM_REL_TOL),
    ])
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn write_metadata<C: Serialize>(dir: &Path, command: &str, config: &C, started: (u64, Instant), skipped: &[String]) -> Result<()> {
    let meta = Metadata {
        command,
        config,
        generator: GENERATOR_NAME,
        code_version: env!("CARGO_PKG_VERSION"),
        started_unix_seconds: started.0,
        wall_clock_seconds: started.1.elapsed().as_secs_f64(),
        tolerances: tolerances(),
        skipped,
    };
    output::write_json(&dir.join(METADATA_FILE), &meta)
}

/// Runs one experiment and writes its artifacts under `config.out`.
pub fn run(config: &ExperimentConfig) -> Result<RunOutcome> {
    let started = (unix_now(), Instant::now());
    config.validate()?;
    let params = config.params()?;
    let dir = config.out.as_path();
    std::fs::create_dir_all(dir)?;
    let outcome = if config.experiment.simulates() {
        run_ensemble(config, &params, dir)?
    } else {
        run_exact(config, &params, dir)?
    };
    output::write_json(&dir.join(REPORT_FILE), &outcome.reports)?;
    write_metadata(dir, config.experiment.name(), config, started, &outcome.skipped)?;
    Ok(outcome)
}

fn run_ensemble(config: &ExperimentConfig, params: &ModelParams, dir: &Path) -> Result<RunOutcome> {
    let checkpoints = config.checkpoint_times()?;
    let summary = ensemble_run(params, config.steps, config.trajectories, config.seed, &checkpoints, config.workers)?;
    let reports = match config.experiment {
        Experiment::Simulate => verify_martingale(&summary),
        Experiment::GramLimit => verify_gram_limit(&summary, ML_REFERENCE_DRAWS)?,
        Experiment::Clt => verify_clt(&summary, params.regime)?,
        Experiment::MixtureClt => verify_mixture_clt(&summary)?,
        Experiment::Superdiffusive => verify_superdiffusive(&summary)?,
        Experiment::Lil => vec![lil_monitor(&summary)?],
        other => unreachable!("{} does not simulate", other.name()),
    };
    write_ensemble(config.formats.as_slice(), dir, &summary)?;
    Ok(RunOutcome { reports, skipped: Vec::new() })
}

fn write_ensemble(formats: &[OutputFormat], dir: &Path, summary: &EnsembleSummary) -> Result<()> {
    if formats.contains(&OutputFormat::Csv) {
        output::write_trajectories(&dir.join(TRAJECTORIES_FILE), summary)?;
    }
    if formats.contains(&OutputFormat::Json) {
        output::write_json(&dir.join(SUMMARY_FILE), &summary.report())?;
    }
    Ok(())
}

fn run_exact(config: &ExperimentConfig, params: &ModelParams, dir: &Path) -> Result<RunOutcome> {
    let csv = config.wants(OutputFormat::Csv);
    let json = config.wants(OutputFormat::Json);
    let mut reports = Vec::new();
    match config.experiment {
        Experiment::Oracle => {
            let grid = config.checkpoint_times()?;
            let tables = expected_outer_grid(params, &grid);
            for t in &tables {
                if let Some(closed) = outer_closed_form(params, t.n) {
                    let tol = CLOSED_FORM_REL_TOL * closed.abs();
                    reports.push(
                        TestReport::two_sided(format!("closed_form[n={}]", t.n), t.e_outer_diag, closed, tol, 0)
                            .with_notes("moment recursion against the rising-factorial closed form"),
                    );
                }
            }
            if csv {
                output::write_moment_tables(&dir.join("oracle.csv"), &tables)?;
            }
            if json {
                output::write_json(&dir.join(SUMMARY_FILE), &tables)?;
            }
        }
        Experiment::Enumerate => {
            let law = enumerate_distribution(params, config.steps)?;
            let m = law.moments();
            let exact = expected_outer(params, config.steps);
            reports.push(TestReport::two_sided("total_probability", m.total_mass, 1.0, EXACT_TOL, 0));
            reports.push(TestReport::two_sided("e_sigma2", m.e_sigma2, exact.e_sigma2, EXACT_TOL, 0));
            for i in 0..params.d {
                reports.push(TestReport::two_sided(format!("e_gram[{}]", i + 1), m.e_gram_diag[i], exact.e_gram_diag, EXACT_TOL, 0));
                for j in 0..params.d {
                    let reference = if i == j { exact.e_outer_diag } else { 0.0 };
                    reports.push(TestReport::two_sided(format!("e_outer[{},{}]", i + 1, j + 1), m.e_outer[i][j], reference, EXACT_TOL, 0));
                }
            }
            if csv {
                output::write_joint_law(&dir.join("enumerate.csv"), &law)?;
            }
            if json {
                output::write_json(&dir.join(SUMMARY_FILE), &law)?;
            }
        }
        Experiment::MlTable => {
            let alpha = config.alpha.unwrap_or(params.b);
            let mut rows: Vec<(&str, f64, f64)> = Vec::new();
            if alpha < 1.0 {
                for k in 1..=200 {
                    let x = k as f64 * 0.05;
                    if let Ok(v) = ml_pdf(alpha, x) {
                        rows.push(("pdf", x, v));
                    }
                }
            }
            for k in -20..=20 {
                let t = k as f64 * 0.25;
                if let Ok(v) = ml_function(alpha, t) {
                    rows.push(("function", t, v));
                }
            }
            for m in 0..=10u32 {
                rows.push(("moment", m as f64, ml_moment(alpha, m)));
            }
            if csv {
                output::write_labeled_table(&dir.join("ml_table.csv"), alpha, &rows)?;
            }
            if json {
                #[derive(Serialize)]
                struct Row<'a> {
                    kind: &'a str,
                    arg: f64,
                    value: f64,
                }
                let json_rows: Vec<Row> = rows.iter().map(|&(kind, arg, value)| Row { kind, arg, value }).collect();
                output::write_json(&dir.join(SUMMARY_FILE), &serde_json::json!({ "alpha": alpha, "rows": json_rows }))?;
            }
        }
        Experiment::MlSample => {
            let alpha = config.alpha.unwrap_or(params.b);
            let mut rng = stream(config.seed, 0);
            let draws: Vec<f64> = (0..config.trajectories).map(|_| ml_sample(alpha, &mut rng)).collect();
            if draws.len() >= 2 {
                let e = mean_estimate(&draws);
                let reference = ml_moment(alpha, 1);
                reports.push(
                    TestReport::two_sided("sample_mean", e.value, reference, SE_BAND * e.se, draws.len())
                        .with_notes(format!("se {:.3e}", e.se)),
                );
            }
            if csv {
                let rows: Vec<Vec<f64>> = draws.iter().map(|&x| vec![x]).collect();
                output::write_real_table(&dir.join("ml_samples.csv"), &["value"], &rows)?;
            }
            if json {
                output::write_json(&dir.join(SUMMARY_FILE), &serde_json::json!({ "alpha": alpha, "draws": draws.len() }))?;
            }
        }
        Experiment::Coefftable => {
            let grid = config.checkpoint_times()?;
            let table = CoeffTable::for_params(params, config.steps as usize);
            let vn = vn_sequence(params, config.steps as usize);
            let rows: Vec<Vec<f64>> = grid
                .iter()
                .map(|&n| vec![n as f64, table.a_n(n), table.b_n(n), table.alpha_n(n), vn.values[n as usize - 1]])
                .collect();
            if csv {
                output::write_real_table(&dir.join("coefficients.csv"), &["n", "a_n", "b_n", "alpha_n", "v_n"], &rows)?;
            }
            if json {
                output::write_json(&dir.join(SUMMARY_FILE), &serde_json::json!({ "rows": rows, "asymptote": vn.asymptote }))?;
            }
        }
        other => unreachable!("{} simulates", other.name()),
    }
    Ok(RunOutcome { reports, skipped: Vec::new() })
}

/// The three parameter sets of the default suite, `d = 2`.
pub fn default_sets() -> [ModelParams; 3] {
    [
        derive_params(2, 0.4, 0.2).expect("valid"),
        derive_params(2, 0.5, 0.2).expect("valid"),
        derive_params(2, 0.9, 0.05).expect("valid"),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyAllOptions {
    pub steps: u64,
    pub trajectories: u64,
    pub seed: u64,
    pub ratio: f64,
    pub workers: usize,
    pub ml_draws: usize,
    pub out: PathBuf,
    pub formats: Vec<OutputFormat>,
}

impl Default for VerifyAllOptions {
    fn default() -> Self {
        VerifyAllOptions {
            steps: 1_000_000,
            trajectories: 10_000,
            seed: 1,
            ratio: crate::walk::default_ratio(),
            workers: 0,
            ml_draws: ML_REFERENCE_DRAWS,
            out: PathBuf::from("merws-verify"),
            formats: vec![OutputFormat::Csv, OutputFormat::Json],
        }
    }
}

fn prefixed(regime: Regime, reports: Vec<TestReport>) -> Vec<TestReport> {
    reports
        .into_iter()
        .map(|mut r| {
            r.name = format!("{regime}/{}", r.name);
            r
        })
        .collect()
}

/// Checkpoints for one suite run: the geometric grid plus the fixed times
/// the checks read.
fn suite_checkpoints(steps: u64, ratio: f64, regime: Regime) -> Vec<u64> {
    let mut cps = geometric_checkpoints(steps, ratio);
    cps.extend([100, 1000, 10_000].into_iter().filter(|&n| n <= steps));
    if regime == Regime::Superdiffusive {
        cps.extend([steps / 10, steps / 100].into_iter().filter(|&n| n >= 1));
    }
    cps.sort_unstable();
    cps.dedup();
    cps
}

/// Runs every check on one parameter set per regime.
///
/// Set `k` uses master seed `mix64(seed ^ (2^62 + k))`. Checks whose
/// horizon requirement exceeds `steps` are listed as skipped.
pub fn verify_all(opts: &VerifyAllOptions) -> Result<RunOutcome> {
    let started = (unix_now(), Instant::now());
    let dir = opts.out.as_path();
    std::fs::create_dir_all(dir)?;
    let mut reports = Vec::new();
    let mut skipped = Vec::new();
    let mut summaries = Vec::new();
    for (k, params) in default_sets().iter().enumerate() {
        let regime = params.regime;
        let seed = stream_seed(opts.seed, SET_SEED_BASE + k as u64);
        let cps = suite_checkpoints(opts.steps, opts.ratio, regime);
        let summary = ensemble_run(params, opts.steps, opts.trajectories, seed, &cps, opts.workers)?;

        let mut set_reports: Vec<TestReport> = verify_martingale(&summary)
            .into_iter()
            .zip(&cps)
            .filter(|(_, n)| [100, 1000, 10_000, opts.steps].contains(n))
            .map(|(r, _)| r)
            .collect();
        let mut skip = |what: &str, need: u64| skipped.push(format!("{regime}/{what}: needs steps >= {need}"));
        if opts.steps >= 1000 {
            set_reports.extend(verify_second_moments(&summary, 1000)?);
        } else {
            skip("second_moments", 1000);
        }
        if opts.steps >= verify::GRAM_MIN_HORIZON {
            set_reports.extend(verify_gram_limit(&summary, opts.ml_draws)?);
        } else {
            skip("gram_limit", verify::GRAM_MIN_HORIZON);
        }
        match regime {
            Regime::Superdiffusive => {
                if opts.steps >= 10_000 && opts.steps % 100 == 0 {
                    set_reports.extend(verify_superdiffusive(&summary)?);
                } else {
                    skip("superdiffusive", 10_000);
                }
            }
            _ => {
                if opts.steps >= verify::CLT_MIN_HORIZON {
                    set_reports.extend(verify_clt(&summary, regime)?);
                    set_reports.extend(verify_mixture_clt(&summary)?);
                } else {
                    skip("clt", verify::CLT_MIN_HORIZON);
                    skip("mixture_clt", verify::CLT_MIN_HORIZON);
                }
                if opts.steps >= verify::LIL_MIN_HORIZON {
                    set_reports.push(lil_monitor(&summary)?);
                } else {
                    skip("lil", verify::LIL_MIN_HORIZON);
                }
            }
        }
        reports.extend(prefixed(regime, set_reports));
        if opts.formats.contains(&OutputFormat::Csv) {
            output::write_trajectories(&dir.join(regime.to_string()).join(TRAJECTORIES_FILE), &summary)?;
        }
        summaries.push(summary.report());
    }
    output::write_json(&dir.join(REPORT_FILE), &reports)?;
    if opts.formats.contains(&OutputFormat::Json) {
        output::write_json(&dir.join(SUMMARY_FILE), &summaries)?;
    }
    write_metadata(dir, "verify-all", opts, started, &skipped)?;
    Ok(RunOutcome { reports, skipped })
}
