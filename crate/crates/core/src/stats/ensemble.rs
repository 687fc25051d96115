//! Ensembles of independent trajectories.

use std::ops::Range;

use rand::SeedableRng;
use rayon::prelude::*;
use serde::Serialize;

use super::estimate::{mean_estimate, Estimate};
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::oracle::expected_outer_grid;
use crate::rng::{stream_seed, StreamRng, GENERATOR_NAME};
use crate::walk::{run_into, validate_checkpoints, Trajectory, TrajectoryRecord};

/// Raw state of every trajectory at one checkpoint, in trajectory order.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointColumns {
    pub n: u64,
    /// Row-major `N × d`.
    pub position: Vec<i64>,
    /// Row-major `N × d`.
    pub gram_diag: Vec<u64>,
    pub sigma2: Vec<u64>,
}

impl CheckpointColumns {
    fn empty(n: u64) -> Self {
        CheckpointColumns { n, position: Vec::new(), gram_diag: Vec::new(), sigma2: Vec::new() }
    }

    /// Coordinate `i` of every trajectory.
    pub fn coordinate(&self, d: usize, i: usize) -> Vec<f64> {
        self.position.iter().skip(i).step_by(d).map(|&x| x as f64).collect()
    }

    pub fn sigma2_f64(&self) -> Vec<f64> {
        self.sigma2.iter().map(|&x| x as f64).collect()
    }

    /// Squared norm `‖S_n‖²` of every trajectory.
    pub fn norm2(&self, d: usize) -> Vec<f64> {
        self.position.chunks(d).map(|row| row.iter().map(|&x| (x * x) as f64).sum()).collect()
    }
}

/// All checkpoint records of a contiguous range of trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSummary {
    pub params: ModelParams,
    pub n_steps: u64,
    pub master_seed: u64,
    pub generator: String,
    /// Trajectory indices covered; stream `i` is seeded from `mix64(seed ^ i)`.
    pub traj_range: Range<u64>,
    pub checkpoints: Vec<u64>,
    pub columns: Vec<CheckpointColumns>,
}

/// Derived statistics at one checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckpointStats {
    pub n: u64,
    pub mean_position: Vec<Estimate>,
    /// Unbiased covariance of `S_n`.
    pub cov_position: Vec<Vec<f64>>,
    /// Raw second moments `E[S_n(i) S_n(j)]`.
    pub outer: Vec<Vec<Estimate>>,
    pub sigma2_mean: Estimate,
    pub sigma2_variance: f64,
    /// Mean of `b_n σ_n²`.
    pub martingale_mean: Estimate,
    /// Moments `m = 1, 2, 3` of `σ_n² / n^b`.
    pub scaled_sigma2_moments: Vec<Estimate>,
    /// Mean of `σ_n²(i) / σ_n²` per axis.
    pub gram_share: Vec<Estimate>,
}

/// Run summary for serialization.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryReport {
    pub params: ModelParams,
    pub n_steps: u64,
    pub n_traj: u64,
    pub first_traj: u64,
    pub master_seed: u64,
    pub generator: String,
    pub checkpoints: Vec<CheckpointStats>,
}

impl EnsembleSummary {
    pub fn n_traj(&self) -> usize {
        (self.traj_range.end - self.traj_range.start) as usize
    }

    pub fn d(&self) -> usize {
        self.params.d
    }

    /// Columns at time `n`, if `n` is a checkpoint.
    pub fn at(&self, n: u64) -> Option<&CheckpointColumns> {
        self.columns.iter().find(|c| c.n == n)
    }

    pub fn last(&self) -> &CheckpointColumns {
        self.columns.last().expect("ensemble has at least one checkpoint")
    }

    pub fn final_n(&self) -> u64 {
        self.checkpoints.last().copied().unwrap_or(0)
    }

    /// Appends the ensemble that directly follows this one.
    pub fn merge(mut self, other: EnsembleSummary) -> Result<EnsembleSummary> {
        let compatible = self.params == other.params
            && self.n_steps == other.n_steps
            && self.master_seed == other.master_seed
            && self.checkpoints == other.checkpoints
            && self.generator == other.generator;
        if !compatible {
            return Err(Error::ConfigInvalid {
                field: "merge".into(),
                message: "ensembles differ in parameters, seed or checkpoints".into(),
            });
        }
        if self.traj_range.end != other.traj_range.start {
            return Err(Error::ConfigInvalid {
                field: "merge".into(),
                message: format!(
                    "trajectory ranges {:?} and {:?} are not adjacent",
                    self.traj_range, other.traj_range
                ),
            });
        }
        self.traj_range.end = other.traj_range.end;
        for (mine, theirs) in self.columns.iter_mut().zip(other.columns) {
            mine.position.extend(theirs.position);
            mine.gram_diag.extend(theirs.gram_diag);
            mine.sigma2.extend(theirs.sigma2);
        }
        Ok(self)
    }

    /// Per-trajectory records, ordered by trajectory then time.
    pub fn records(&self) -> impl Iterator<Item = TrajectoryRecord> + '_ {
        let d = self.d();
        (0..self.n_traj()).flat_map(move |t| {
            self.columns.iter().map(move |c| TrajectoryRecord {
                traj_id: self.traj_range.start + t as u64,
                n: c.n,
                position: c.position[t * d..(t + 1) * d].to_vec(),
                gram_diag: c.gram_diag[t * d..(t + 1) * d].to_vec(),
                sigma2: c.sigma2[t],
            })
        })
    }

    pub fn stats(&self) -> Vec<CheckpointStats> {
        let d = self.d();
        let b = self.params.b;
        let exact = expected_outer_grid(&self.params, &self.checkpoints);
        self.columns
            .iter()
            .zip(exact)
            .map(|(c, exact)| {
                let coords: Vec<Vec<f64>> = (0..d).map(|i| c.coordinate(d, i)).collect();
                let means: Vec<f64> = coords.iter().map(|x| super::estimate::mean(x)).collect();
                let nt = c.sigma2.len() as f64;
                let mut cov = vec![vec![0.0; d]; d];
                let mut outer = Vec::with_capacity(d);
                for i in 0..d {
                    let mut row = Vec::with_capacity(d);
                    for j in 0..d {
                        let prod: Vec<f64> = coords[i].iter().zip(&coords[j]).map(|(x, y)| x * y).collect();
                        let est = mean_estimate(&prod);
                        cov[i][j] = (est.value - means[i] * means[j]) * nt / (nt - 1.0);
                        row.push(est);
                    }
                    outer.push(row);
                }
                let sigma2 = c.sigma2_f64();
                let scale = (c.n as f64).powf(b);
                let scaled: Vec<f64> = sigma2.iter().map(|s| s / scale).collect();
                let moments = (1..=3)
                    .map(|m| mean_estimate(&scaled.iter().map(|x| x.powi(m)).collect::<Vec<_>>()))
                    .collect();
                let martingale: Vec<f64> = sigma2.iter().map(|s| s / exact.e_sigma2).collect();
                let gram_share = (0..d)
                    .map(|i| {
                        let share: Vec<f64> =
                            c.gram_diag.iter().skip(i).step_by(d).zip(&c.sigma2).map(|(&g, &s)| g as f64 / s as f64).collect();
                        mean_estimate(&share)
                    })
                    .collect();
                let sigma2_mean = mean_estimate(&sigma2);
                CheckpointStats {
                    n: c.n,
                    mean_position: coords.iter().map(|x| mean_estimate(x)).collect(),
                    cov_position: cov,
                    outer,
                    sigma2_variance: super::estimate::variance(&sigma2),
                    sigma2_mean,
                    martingale_mean: mean_estimate(&martingale),
                    scaled_sigma2_moments: moments,
                    gram_share,
                }
            })
            .collect()
    }

    pub fn report(&self) -> SummaryReport {
        SummaryReport {
            params: self.params,
            n_steps: self.n_steps,
            n_traj: self.n_traj() as u64,
            first_traj: self.traj_range.start,
            master_seed: self.master_seed,
            generator: self.generator.clone(),
            checkpoints: self.stats(),
        }
    }
}

/// Per-trajectory output before transposition into columns.
struct TrajectoryOutput {
    position: Vec<i64>,
    gram_diag: Vec<u64>,
    sigma2: Vec<u64>,
}

fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::ConfigInvalid { field: "workers".into(), message: e.to_string() })
}

/// Runs trajectories `range` of the ensemble seeded by `seed`.
///
/// `workers = 0` uses one worker per available core. The result does not
/// depend on the worker count.
pub fn ensemble_range(
    params: &ModelParams,
    n_steps: u64,
    range: Range<u64>,
    seed: u64,
    checkpoints: &[u64],
    workers: usize,
) -> Result<EnsembleSummary> {
    if n_steps == 0 {
        return Err(Error::CheckpointOutOfRange { checkpoint: 0, n_steps });
    }
    validate_checkpoints(n_steps, checkpoints)?;
    if checkpoints.is_empty() {
        return Err(Error::ConfigInvalid { field: "checkpoints".into(), message: "at least one checkpoint is required".into() });
    }
    let d = params.d;
    let k = checkpoints.len();
    let pool = thread_pool(workers)?;
    let outputs: Vec<TrajectoryOutput> = pool.install(|| {
        range
            .clone()
            .into_par_iter()
            .map_init(
                || Trajectory::with_capacity(*params, n_steps as usize),
                |traj, index| {
                    let mut rng = StreamRng::seed_from_u64(stream_seed(seed, index));
                    let mut out = TrajectoryOutput {
                        position: Vec::with_capacity(k * d),
                        gram_diag: Vec::with_capacity(k * d),
                        sigma2: Vec::with_capacity(k),
                    };
                    run_into(traj, n_steps, checkpoints, &mut rng, |t| {
                        out.position.extend_from_slice(t.position());
                        out.gram_diag.extend_from_slice(t.gram_diag());
                        out.sigma2.push(t.sigma2());
                    });
                    out
                },
            )
            .collect()
    });

    let mut columns: Vec<CheckpointColumns> = checkpoints.iter().map(|&n| CheckpointColumns::empty(n)).collect();
    for col in columns.iter_mut() {
        col.position.reserve(outputs.len() * d);
        col.gram_diag.reserve(outputs.len() * d);
        col.sigma2.reserve(outputs.len());
    }
    for out in &outputs {
        for (j, col) in columns.iter_mut().enumerate() {
            col.position.extend_from_slice(&out.position[j * d..(j + 1) * d]);
            col.gram_diag.extend_from_slice(&out.gram_diag[j * d..(j + 1) * d]);
            col.sigma2.push(out.sigma2[j]);
        }
    }
    Ok(EnsembleSummary {
        params: *params,
        n_steps,
        master_seed: seed,
        generator: GENERATOR_NAME.to_string(),
        traj_range: range,
        checkpoints: checkpoints.to_vec(),
        columns,
    })
}

/// Runs `n_traj >= 2` trajectories to `n_steps`, recording each checkpoint.
pub fn ensemble_run(
    params: &ModelParams,
    n_steps: u64,
    n_traj: u64,
    seed: u64,
    checkpoints: &[u64],
    workers: usize,
) -> Result<EnsembleSummary> {
    if n_traj < 2 {
        return Err(Error::ConfigInvalid { field: "trajectories".into(), message: "at least 2 trajectories are required".into() });
    }
    ensemble_range(params, n_steps, 0..n_traj, seed, checkpoints, workers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::derive_params;
    use crate::walk::simulate;

    fn params() -> ModelParams {
        derive_params(2, 0.55, 0.2).unwrap()
    }

    #[test]
    fn one_step_ensemble() {
        let s = ensemble_run(&params(), 1, 2, 9, &[1], 1).unwrap();
        let st = &s.stats()[0];
        assert_eq!(st.sigma2_mean.value, 1.0);
        assert_eq!(st.martingale_mean.value, 1.0);
        assert!(ensemble_run(&params(), 1, 1, 9, &[1], 1).is_err());
    }

    #[test]
    fn matches_single_trajectory_simulation() {
        let p = params();
        let cps = [1, 7, 50];
        let s = ensemble_run(&p, 50, 5, 77, &cps, 2).unwrap();
        let recs: Vec<TrajectoryRecord> = s.records().collect();
        for t in 0..5u64 {
            let single = simulate(&p, 50, stream_seed(77, t), &cps).unwrap();
            for (j, r) in single.iter().enumerate() {
                let got = &recs[t as usize * cps.len() + j];
                assert_eq!(got.traj_id, t);
                assert_eq!((got.n, &got.position, &got.gram_diag, got.sigma2), (r.n, &r.position, &r.gram_diag, r.sigma2));
            }
        }
    }

    #[test]
    fn merge_is_concatenation() {
        let p = params();
        let cps = [10, 100];
        let full = ensemble_range(&p, 100, 0..40, 5, &cps, 3).unwrap();
        let a = ensemble_range(&p, 100, 0..17, 5, &cps, 1).unwrap();
        let b = ensemble_range(&p, 100, 17..40, 5, &cps, 2).unwrap();
        let merged = a.clone().merge(b.clone()).unwrap();
        assert_eq!(merged, full);
        assert_eq!(merged.stats(), full.stats());
        assert!(b.merge(a).is_err());
    }

    #[test]
    fn worker_count_does_not_matter() {
        let p = params();
        let one = ensemble_run(&p, 300, 64, 3, &[30, 300], 1).unwrap();
        let many = ensemble_run(&p, 300, 64, 3, &[30, 300], 16).unwrap();
        assert_eq!(one, many);
        assert_eq!(serde_json::to_string(&one.report()).unwrap(), serde_json::to_string(&many.report()).unwrap());
    }

    #[test]
    fn sigma2_mean_matches_oracle() {
        let p = params();
        let n = 1000;
        let s = ensemble_run(&p, n, 20_000, 21, &[n], 0).unwrap();
        let st = &s.stats()[0];
        let want = crate::oracle::expected_sigma2(&p, n);
        assert!(st.sigma2_mean.z(want).abs() < 3.0, "{:?} vs {want}", st.sigma2_mean);
    }

    #[test]
    fn split_half_standard_errors() {
        let p = params();
        let full = ensemble_run(&p, 200, 8000, 13, &[200], 0).unwrap();
        let half = ensemble_range(&p, 200, 0..4000, 13, &[200], 0).unwrap();
        let (sf, sh) = (full.stats()[0].sigma2_mean.se, half.stats()[0].sigma2_mean.se);
        let ratio = sh / sf;
        let target = 2f64.sqrt();
        assert!(ratio > target / 2.0 && ratio < target * 2.0, "ratio {ratio}");
    }

    #[test]
    fn rejects_bad_checkpoints() {
        assert!(ensemble_run(&params(), 10, 4, 1, &[11], 1).is_err());
        assert!(ensemble_run(&params(), 10, 4, 1, &[], 1).is_err());
    }
}
