//! Exact simulation of the walk.
//!
//! A step is either a stop (the zero vector) or a signed unit move `±e_i`.
//! After the first step, which is uniform over the `2d` signed directions,
//! the walk picks a uniformly random past time and applies a random signed
//! permutation (or the zero matrix) to the step taken then.
//!
//! Two sampling paths exist. [`MemoryKernel`] collapses the matrix draw into
//! direct categories and is used in production. [`StepMatrix`] samples the
//! matrix explicitly and is kept for cross-validation.

use rand::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::rng::{bounded, unit_f64, StreamRng};

/// One increment, packed in a byte: `0` is a stop, otherwise
/// `1 + 2 * axis + negative` with a zero-based axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Step(u8);

impl Step {
    pub const STOP: Step = Step(0);

    /// Move along zero-based `axis`; `positive` selects the sign.
    pub fn moving(axis: usize, positive: bool) -> Step {
        debug_assert!(axis < crate::model::MAX_DIM);
        Step(1 + 2 * axis as u8 + u8::from(!positive))
    }

    /// Step for signed direction index `dir` in `0..2d` (`2 * axis + negative`).
    #[inline]
    pub fn from_direction(dir: usize) -> Step {
        Step(1 + dir as u8)
    }

    #[inline]
    pub fn is_stop(self) -> bool {
        self.0 == 0
    }

    /// Signed direction index in `0..2d`, or `None` for a stop.
    #[inline]
    pub fn direction(self) -> Option<usize> {
        self.0.checked_sub(1).map(usize::from)
    }

    pub fn axis(self) -> Option<usize> {
        self.direction().map(|dir| dir / 2)
    }

    /// `+1` or `-1` for moves, `0` for a stop.
    pub fn sign(self) -> i64 {
        match self.direction() {
            None => 0,
            Some(dir) if dir % 2 == 0 => 1,
            Some(_) => -1,
        }
    }

    pub fn to_byte(self) -> u8 {
        self.0
    }

    pub fn from_byte(byte: u8) -> Step {
        Step(byte)
    }

    /// Dense integer vector of length `d`.
    pub fn to_vector(self, d: usize) -> Vec<i64> {
        let mut v = vec![0; d];
        if let Some(axis) = self.axis() {
            v[axis] = self.sign();
        }
        v
    }

    fn check_dim(self, d: usize) -> Result<()> {
        match self.axis() {
            Some(axis) if axis >= d => Err(Error::DimensionMismatch {
                expected: d,
                found: axis + 1,
            }),
            _ => Ok(()),
        }
    }
}

/// The first step: uniform over the `2d` signed directions, never a stop.
pub fn first_step<R: RngCore + ?Sized>(d: usize, rng: &mut R) -> Step {
    Step::from_direction(bounded(rng, 2 * d as u64) as usize)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MatrixKind {
    Identity,
    /// `J_d^power` with `1 <= power <= d - 1`.
    ShiftPower(usize),
    Zero,
}

/// One of the `2d + 1` random matrices `±I_d`, `±J_d^i`, `0`.
///
/// `J_d` is the cyclic permutation with ones on the superdiagonal and in the
/// bottom-left corner, so `J_d e_1 = e_d` and `J_d e_j = e_{j-1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StepMatrix {
    pub d: usize,
    pub kind: MatrixKind,
    pub positive: bool,
}

impl StepMatrix {
    /// All `2d + 1` outcomes with their probabilities under `params`.
    pub fn outcomes(params: &ModelParams) -> Vec<(StepMatrix, f64)> {
        let d = params.d;
        let mut out = Vec::with_capacity(2 * d + 1);
        let m = |kind, positive| StepMatrix { d, kind, positive };
        out.push((m(MatrixKind::Identity, true), params.p));
        out.push((m(MatrixKind::Identity, false), params.q));
        for power in 1..d {
            out.push((m(MatrixKind::ShiftPower(power), true), params.q));
            out.push((m(MatrixKind::ShiftPower(power), false), params.q));
        }
        out.push((m(MatrixKind::Zero, true), params.r));
        out
    }

    /// Samples a matrix by inverse transform over [`StepMatrix::outcomes`].
    pub fn sample<R: RngCore + ?Sized>(params: &ModelParams, rng: &mut R) -> StepMatrix {
        let outcomes = Self::outcomes(params);
        let u = unit_f64(rng);
        let mut acc = 0.0;
        for (matrix, weight) in &outcomes {
            acc += weight;
            if u < acc {
                return *matrix;
            }
        }
        // u landed in the rounding gap of the cumulative sum.
        outcomes.last().map(|(m, _)| *m).expect("at least three outcomes")
    }

    fn check(&self) -> Result<()> {
        match self.kind {
            MatrixKind::ShiftPower(power) if power == 0 || power >= self.d => {
                Err(Error::DimensionMismatch {
                    expected: self.d,
                    found: power + 1,
                })
            }
            _ => Ok(()),
        }
    }
}

/// Matrix action on an encoded step.
pub fn apply_step_matrix(m: StepMatrix, x: Step) -> Result<Step> {
    m.check()?;
    x.check_dim(m.d)?;
    let Some(axis) = x.axis() else {
        return Ok(Step::STOP);
    };
    let positive = (x.sign() > 0) == m.positive;
    let target = match m.kind {
        MatrixKind::Zero => return Ok(Step::STOP),
        MatrixKind::Identity => axis,
        MatrixKind::ShiftPower(power) => (axis + m.d - power) % m.d,
    };
    Ok(Step::moving(target, positive))
}

/// Collapsed memory rule: repeat the remembered direction with probability
/// `p`, move to each of the other `2d - 1` signed directions with
/// probability `q`, stop with probability `r`. A remembered stop always
/// yields a stop.
#[derive(Debug, Clone, Copy)]
pub struct MemoryKernel {
    directions: u64,
    same: f64,
    moving: f64,
}

impl MemoryKernel {
    pub fn new(params: &ModelParams) -> Self {
        MemoryKernel {
            directions: params.directions() as u64,
            same: params.p,
            moving: params.b,
        }
    }

    #[inline]
    pub fn sample<R: RngCore + ?Sized>(&self, remembered: Step, rng: &mut R) -> Step {
        let Some(dir) = remembered.direction() else {
            return Step::STOP;
        };
        let u = unit_f64(rng);
        if u < self.same {
            remembered
        } else if u < self.moving {
            let other = bounded(rng, self.directions - 1) as usize;
            Step::from_direction(if other >= dir { other + 1 } else { other })
        } else {
            Step::STOP
        }
    }
}

/// One draw of the memory rule for `remembered`.
pub fn memory_step<R: RngCore + ?Sized>(remembered: Step, params: &ModelParams, rng: &mut R) -> Step {
    MemoryKernel::new(params).sample(remembered, rng)
}

/// Two-stage reference path: sample a [`StepMatrix`], then apply it.
pub fn matrix_step<R: RngCore + ?Sized>(remembered: Step, params: &ModelParams, rng: &mut R) -> Step {
    let m = StepMatrix::sample(params, rng);
    apply_step_matrix(m, remembered).expect("matrix sampled for the walk's own dimension")
}

/// Walk state at time `n`: position, full step history and the diagonal of
/// the Gram matrix (per-axis move counts).
#[derive(Debug, Clone)]
pub struct Trajectory {
    params: ModelParams,
    kernel: MemoryKernel,
    position: Vec<i64>,
    history: Vec<Step>,
    gram_diag: Vec<u64>,
    sigma2: u64,
}

impl Trajectory {
    /// Empty trajectory at `n = 0`.
    pub fn new(params: ModelParams) -> Self {
        Self::with_capacity(params, 0)
    }

    pub fn with_capacity(params: ModelParams, capacity: usize) -> Self {
        Trajectory {
            kernel: MemoryKernel::new(&params),
            position: vec![0; params.d],
            history: Vec::with_capacity(capacity),
            gram_diag: vec![0; params.d],
            sigma2: 0,
            params,
        }
    }

    /// Back to `n = 0`, keeping the history allocation.
    pub fn reset(&mut self) {
        self.history.clear();
        self.position.iter_mut().for_each(|x| *x = 0);
        self.gram_diag.iter_mut().for_each(|x| *x = 0);
        self.sigma2 = 0;
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn n(&self) -> u64 {
        self.history.len() as u64
    }

    pub fn position(&self) -> &[i64] {
        &self.position
    }

    pub fn history(&self) -> &[Step] {
        &self.history
    }

    pub fn gram_diag(&self) -> &[u64] {
        &self.gram_diag
    }

    pub fn sigma2(&self) -> u64 {
        self.sigma2
    }

    /// Squared Euclidean norm of the position.
    pub fn norm2(&self) -> u64 {
        self.position.iter().map(|&x| (x * x) as u64).sum()
    }

    #[inline]
    fn push(&mut self, step: Step) {
        if let Some(axis) = step.axis() {
            self.position[axis] += step.sign();
            self.gram_diag[axis] += 1;
            self.sigma2 += 1;
        }
        self.history.push(step);
    }

    /// Takes the first step. Panics unless `n = 0`.
    pub fn start<R: RngCore + ?Sized>(&mut self, rng: &mut R) -> Step {
        assert!(self.history.is_empty(), "trajectory already started");
        let step = first_step(self.params.d, rng);
        self.push(step);
        step
    }

    /// Advances from `n` to `n + 1` (or takes the first step at `n = 0`).
    #[inline]
    pub fn step<R: RngCore + ?Sized>(&mut self, rng: &mut R) -> Step {
        self.step_traced(rng).1
    }

    /// Like [`Trajectory::step`], also returning the zero-based memory index
    /// that was sampled (`None` for the first step).
    #[inline]
    pub fn step_traced<R: RngCore + ?Sized>(&mut self, rng: &mut R) -> (Option<usize>, Step) {
        let n = self.history.len();
        if n == 0 {
            return (None, self.start(rng));
        }
        let k = bounded(rng, n as u64) as usize;
        let step = self.kernel.sample(self.history[k], rng);
        self.push(step);
        (Some(k), step)
    }

    /// Appends a step chosen by the caller; used by replay and enumeration tests.
    pub fn push_step(&mut self, step: Step) -> Result<()> {
        step.check_dim(self.params.d)?;
        self.push(step);
        Ok(())
    }

    pub fn record(&self, traj_id: u64) -> TrajectoryRecord {
        TrajectoryRecord {
            traj_id,
            n: self.n(),
            position: self.position.clone(),
            gram_diag: self.gram_diag.clone(),
            sigma2: self.sigma2,
        }
    }
}

/// State of one trajectory at one checkpoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub traj_id: u64,
    pub n: u64,
    pub position: Vec<i64>,
    pub gram_diag: Vec<u64>,
    pub sigma2: u64,
}

/// Checks that checkpoints are sorted, distinct and inside `[1, n_steps]`.
pub fn validate_checkpoints(n_steps: u64, checkpoints: &[u64]) -> Result<()> {
    for &c in checkpoints {
        if c == 0 || c > n_steps {
            return Err(Error::CheckpointOutOfRange {
                checkpoint: c,
                n_steps,
            });
        }
    }
    if checkpoints.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::ConfigInvalid {
            field: "checkpoints".into(),
            message: "must be strictly increasing".into(),
        });
    }
    Ok(())
}

/// Log-spaced checkpoints `round(ratio^k)` in `[1, n_steps]`, always ending
/// at `n_steps`.
pub fn geometric_checkpoints(n_steps: u64, ratio: f64) -> Vec<u64> {
    assert!(ratio > 1.0, "checkpoint ratio must exceed 1");
    let mut out: Vec<u64> = Vec::new();
    let mut k = 0i32;
    loop {
        let t = ratio.powi(k).round() as u64;
        if t > n_steps {
            break;
        }
        if out.last() != Some(&t) {
            out.push(t);
        }
        k += 1;
    }
    if out.last() != Some(&n_steps) {
        out.push(n_steps);
    }
    out
}

/// Default checkpoint ratio, `10^(1/4)`.
pub fn default_ratio() -> f64 {
    10f64.powf(0.25)
}

/// Runs `traj` (reset first) to `n_steps`, handing each checkpoint state to `sink`.
pub fn run_into<R, F>(traj: &mut Trajectory, n_steps: u64, checkpoints: &[u64], rng: &mut R, mut sink: F)
where
    R: RngCore + ?Sized,
    F: FnMut(&Trajectory),
{
    traj.reset();
    let mut next = checkpoints.iter().peekable();
    traj.start(rng);
    loop {
        while next.peek().is_some_and(|&&c| c == traj.n()) {
            sink(traj);
            next.next();
        }
        if traj.n() >= n_steps {
            break;
        }
        // Batch the steps up to the next checkpoint to keep the hot loop tight.
        let until = next.peek().map_or(n_steps, |&&c| c.min(n_steps));
        while traj.n() < until {
            traj.step(rng);
        }
    }
}

/// Simulates one trajectory from stream seed `seed` and returns the records
/// at each checkpoint.
pub fn simulate(params: &ModelParams, n_steps: u64, seed: u64, checkpoints: &[u64]) -> Result<Vec<TrajectoryRecord>> {
    if n_steps == 0 {
        return Err(Error::CheckpointOutOfRange {
            checkpoint: 0,
            n_steps,
        });
    }
    validate_checkpoints(n_steps, checkpoints)?;
    let mut rng = StreamRng::seed_from_u64(seed);
    let mut traj = Trajectory::with_capacity(*params, n_steps as usize);
    let mut records = Vec::with_capacity(checkpoints.len());
    run_into(&mut traj, n_steps, checkpoints, &mut rng, |t| records.push(t.record(0)));
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::derive_params;
    use crate::rng::stream;
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    use std::collections::HashMap;

    fn chi2_pvalue(observed: &[u64], probs: &[f64]) -> f64 {
        let total: u64 = observed.iter().sum();
        let mut stat = 0.0;
        let mut cells = 0;
        for (&o, &p) in observed.iter().zip(probs) {
            if p == 0.0 {
                assert_eq!(o, 0, "observed mass on an impossible outcome");
                continue;
            }
            let e = p * total as f64;
            stat += (o as f64 - e).powi(2) / e;
            cells += 1;
        }
        ChiSquared::new((cells - 1) as f64).unwrap().sf(stat)
    }

    /// `J_d` built entry by entry: ones at `(k, k+1)` and `(d-1, 0)`.
    fn dense_j(d: usize) -> Vec<Vec<i64>> {
        let mut j = vec![vec![0; d]; d];
        for k in 0..d - 1 {
            j[k][k + 1] = 1;
        }
        j[d - 1][0] = 1;
        j
    }

    fn matmul_vec(m: &[Vec<i64>], v: &[i64]) -> Vec<i64> {
        m.iter().map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
    }

    fn dense(m: StepMatrix) -> Vec<Vec<i64>> {
        let d = m.d;
        let sign = if m.positive { 1 } else { -1 };
        let mut out: Vec<Vec<i64>> = (0..d)
            .map(|i| (0..d).map(|k| i64::from(i == k)).collect())
            .collect();
        match m.kind {
            MatrixKind::Zero => return vec![vec![0; d]; d],
            MatrixKind::Identity => {}
            MatrixKind::ShiftPower(power) => {
                let j = dense_j(d);
                for _ in 0..power {
                    out = out
                        .iter()
                        .map(|row| (0..d).map(|c| (0..d).map(|k| row[k] * j[k][c]).sum()).collect())
                        .collect();
                }
            }
        }
        out.iter().map(|row| row.iter().map(|x| sign * x).collect()).collect()
    }

    #[test]
    fn step_encoding_round_trips() {
        for axis in 0..63 {
            for positive in [true, false] {
                let s = Step::moving(axis, positive);
                assert_eq!(s.axis(), Some(axis));
                assert_eq!(s.sign(), if positive { 1 } else { -1 });
                assert_eq!(Step::from_byte(s.to_byte()), s);
            }
        }
        assert!(Step::STOP.is_stop());
        assert_eq!(Step::STOP.to_vector(3), vec![0, 0, 0]);
    }

    #[test]
    fn matrix_examples() {
        let j2 = StepMatrix { d: 2, kind: MatrixKind::ShiftPower(1), positive: true };
        assert_eq!(apply_step_matrix(j2, Step::moving(0, true)).unwrap(), Step::moving(1, true));
        let zero = StepMatrix { d: 3, kind: MatrixKind::Zero, positive: true };
        assert_eq!(apply_step_matrix(zero, Step::moving(2, true)).unwrap(), Step::STOP);
        let minus_i = StepMatrix { d: 3, kind: MatrixKind::Identity, positive: false };
        assert_eq!(apply_step_matrix(minus_i, Step::STOP).unwrap(), Step::STOP);

        let j4_sq = StepMatrix { d: 4, kind: MatrixKind::ShiftPower(2), positive: true };
        assert_eq!(apply_step_matrix(j4_sq, Step::moving(0, true)).unwrap(), Step::moving(2, true));
        let j4 = StepMatrix { d: 4, kind: MatrixKind::ShiftPower(1), positive: true };
        let mut x = Step::moving(0, true);
        for _ in 0..4 {
            x = apply_step_matrix(j4, x).unwrap();
        }
        assert_eq!(x, Step::moving(0, true));
    }

    #[test]
    fn matrix_action_matches_dense_product() {
        for d in 1..=5 {
            let params = derive_params(d, 0.5, 0.1).unwrap();
            for (m, _) in StepMatrix::outcomes(&params) {
                let mat = dense(m);
                for dir in 0..2 * d {
                    let x = Step::from_direction(dir);
                    let got = apply_step_matrix(m, x).unwrap().to_vector(d);
                    assert_eq!(got, matmul_vec(&mat, &x.to_vector(d)), "{m:?} {x:?}");
                }
            }
        }
    }

    #[test]
    fn dimension_mismatch() {
        let m = StepMatrix { d: 2, kind: MatrixKind::Identity, positive: true };
        assert!(matches!(
            apply_step_matrix(m, Step::moving(2, true)),
            Err(Error::DimensionMismatch { .. })
        ));
        let bad = StepMatrix { d: 2, kind: MatrixKind::ShiftPower(2), positive: true };
        assert!(apply_step_matrix(bad, Step::moving(0, true)).is_err());
    }

    #[test]
    fn outcomes_cover_signed_permutations() {
        let params = derive_params(3, 0.4, 0.1).unwrap();
        let outcomes = StepMatrix::outcomes(&params);
        assert_eq!(outcomes.len(), 7);
        let total: f64 = outcomes.iter().map(|(_, w)| w).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn first_step_is_uniform() {
        let mut rng = stream(11, 0);
        assert!((0..1000).all(|_| !first_step(1, &mut rng).is_stop()));
        let d = 3;
        let mut counts = vec![0u64; 2 * d];
        for _ in 0..1_000_000 {
            counts[first_step(d, &mut rng).direction().unwrap()] += 1;
        }
        let p = chi2_pvalue(&counts, &vec![1.0 / 6.0; 6]);
        assert!(p > 0.001, "p = {p}");
    }

    #[test]
    fn remembered_stop_is_absorbing() {
        let params = derive_params(2, 0.3, 0.2).unwrap();
        let mut rng = stream(3, 0);
        for _ in 0..10_000 {
            assert_eq!(memory_step(Step::STOP, &params, &mut rng), Step::STOP);
            assert_eq!(matrix_step(Step::STOP, &params, &mut rng), Step::STOP);
        }
    }

    fn memory_law(params: &ModelParams, remembered: Step) -> Vec<f64> {
        // index 0 = stop, 1 + dir otherwise
        let mut probs = vec![params.q; 2 * params.d + 1];
        probs[0] = params.r;
        probs[1 + remembered.direction().unwrap()] = params.p;
        probs
    }

    #[test]
    fn memory_rule_one_dimension() {
        let params = derive_params(1, 0.6, 0.15).unwrap();
        let remembered = Step::moving(0, true);
        let mut rng = stream(5, 0);
        let mut counts = vec![0u64; 3];
        for _ in 0..1_000_000 {
            counts[memory_step(remembered, &params, &mut rng).to_byte() as usize] += 1;
        }
        let probs = memory_law(&params, remembered);
        assert!((probs[1] - 0.6).abs() < 1e-15 && (probs[2] - 0.25).abs() < 1e-12);
        assert!(chi2_pvalue(&counts, &probs) > 0.001);
    }

    #[test]
    fn collapsed_and_matrix_paths_share_the_law() {
        let params = derive_params(2, 0.45, 0.1).unwrap();
        let remembered = Step::moving(1, false);
        let probs = memory_law(&params, remembered);
        let mut rng = stream(9, 0);
        let mut collapsed = vec![0u64; 5];
        let mut explicit = vec![0u64; 5];
        for _ in 0..1_000_000 {
            collapsed[memory_step(remembered, &params, &mut rng).to_byte() as usize] += 1;
            explicit[matrix_step(remembered, &params, &mut rng).to_byte() as usize] += 1;
        }
        let pc = chi2_pvalue(&collapsed, &probs);
        let pe = chi2_pvalue(&explicit, &probs);
        assert!(pc > 0.001 && pe > 0.001, "collapsed p = {pc}, explicit p = {pe}");
    }

    #[test]
    fn second_step_uses_the_only_memory() {
        let params = derive_params(1, 0.6, 0.15).unwrap();
        let mut rng = stream(21, 0);
        let mut counts = vec![0u64; 3];
        let mut traj = Trajectory::new(params);
        let mut trials = 0;
        while trials < 300_000 {
            traj.reset();
            let first = traj.step(&mut rng);
            let (k, second) = traj.step_traced(&mut rng);
            assert_eq!(k, Some(0));
            if first == Step::moving(0, true) {
                counts[second.to_byte() as usize] += 1;
                trials += 1;
            }
        }
        let probs = memory_law(&params, Step::moving(0, true));
        assert!(chi2_pvalue(&counts, &probs) > 0.001);
    }

    #[test]
    fn mean_of_second_position_is_zero() {
        let params = derive_params(1, 0.7, 0.1).unwrap();
        let mut rng = stream(77, 0);
        let mut traj = Trajectory::new(params);
        let runs = 1_000_000;
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for _ in 0..runs {
            traj.reset();
            traj.step(&mut rng);
            traj.step(&mut rng);
            let s = traj.position()[0] as f64;
            sum += s;
            sum_sq += s * s;
        }
        let mean = sum / runs as f64;
        let se = ((sum_sq / runs as f64 - mean * mean) / runs as f64).sqrt();
        assert!(mean.abs() < 3.0 * se, "mean = {mean}, se = {se}");
    }

    #[test]
    fn trajectory_invariants() {
        for (seed, d) in [(1u64, 1usize), (2, 2), (3, 5)] {
            let params = derive_params(d, 0.5, 0.3).unwrap();
            let mut rng = stream(seed, 0);
            let mut traj = Trajectory::new(params);
            let mut prev_sigma2 = 0;
            for n in 1..=5_000u64 {
                let (k, step) = traj.step_traced(&mut rng);
                if let Some(k) = k {
                    if traj.history()[k].is_stop() {
                        assert!(step.is_stop());
                    }
                }
                assert_eq!(traj.n(), n);
                let inc = traj.sigma2() - prev_sigma2;
                assert!(inc <= 1);
                prev_sigma2 = traj.sigma2();
                let l1: u64 = traj.position().iter().map(|x| x.unsigned_abs()).sum();
                assert!(l1 <= traj.sigma2() && traj.sigma2() <= n);
            }
            assert!(traj.history()[0].axis().is_some());
            let mut pos = vec![0i64; d];
            let mut gram = vec![0u64; d];
            for s in traj.history() {
                for (p, x) in pos.iter_mut().zip(s.to_vector(d)) {
                    *p += x;
                }
                if let Some(axis) = s.axis() {
                    gram[axis] += 1;
                }
            }
            assert_eq!(pos, traj.position());
            assert_eq!(gram, traj.gram_diag());
            assert_eq!(gram.iter().sum::<u64>(), traj.sigma2());
        }
    }

    #[test]
    fn conditional_mean_from_frozen_history() {
        let params = derive_params(2, 0.7, 0.1).unwrap();
        let mut rng = stream(8, 0);
        let mut frozen = Trajectory::new(params);
        for _ in 0..50 {
            frozen.step(&mut rng);
        }
        let n = frozen.n() as f64;
        let replays = 100_000;
        let mut sums = [0.0f64; 2];
        let mut sums_sq = [0.0f64; 2];
        for _ in 0..replays {
            let mut branch = frozen.clone();
            let x = branch.step(&mut rng).to_vector(2);
            for i in 0..2 {
                sums[i] += x[i] as f64;
                sums_sq[i] += (x[i] * x[i]) as f64;
            }
        }
        for i in 0..2 {
            let mean = sums[i] / replays as f64;
            let se = ((sums_sq[i] / replays as f64 - mean * mean) / replays as f64).sqrt();
            let expected = params.a / n * frozen.position()[i] as f64;
            assert!((mean - expected).abs() < 3.0 * se, "axis {i}: {mean} vs {expected} (se {se})");
        }
    }

    #[test]
    fn simulate_is_deterministic() {
        let params = derive_params(2, 0.55, 0.2).unwrap();
        let cps = geometric_checkpoints(10_000, default_ratio());
        let a = simulate(&params, 10_000, 99, &cps).unwrap();
        let b = simulate(&params, 10_000, 99, &cps).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), cps.len());
        assert_eq!(a.last().unwrap().n, 10_000);
    }

    #[test]
    fn single_step_simulation() {
        let params = derive_params(3, 0.5, 0.2).unwrap();
        let recs = simulate(&params, 1, 4, &[1]).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].sigma2, 1);
        assert_eq!(recs[0].position.iter().map(|x| x.abs()).sum::<i64>(), 1);
    }

    #[test]
    fn checkpoint_validation() {
        let params = derive_params(1, 0.5, 0.2).unwrap();
        assert!(matches!(
            simulate(&params, 10, 1, &[5, 11]),
            Err(Error::CheckpointOutOfRange { checkpoint: 11, .. })
        ));
        assert!(simulate(&params, 10, 1, &[0]).is_err());
        assert!(simulate(&params, 10, 1, &[5, 5]).is_err());
    }

    #[test]
    fn geometric_grid() {
        let cps = geometric_checkpoints(100, default_ratio());
        assert_eq!(cps, vec![1, 2, 3, 6, 10, 18, 32, 56, 100]);
        assert_eq!(geometric_checkpoints(1, 10.0), vec![1]);
        assert_eq!(geometric_checkpoints(50, 10.0), vec![1, 10, 50]);
    }

    #[test]
    fn two_step_law_small_tree() {
        // d = 1: S_2 in {-2, -1, 0, 1, 2}; P(S_2 = ±2) = p/2, P(0) = q, P(±1) = r/2.
        let params = derive_params(1, 0.5, 0.2).unwrap();
        let mut rng = stream(12, 0);
        let mut traj = Trajectory::new(params);
        let mut counts: HashMap<i64, u64> = HashMap::new();
        for _ in 0..400_000 {
            traj.reset();
            traj.step(&mut rng);
            traj.step(&mut rng);
            *counts.entry(traj.position()[0]).or_default() += 1;
        }
        let support = [-2, -1, 0, 1, 2];
        let probs = [0.25, 0.1, 0.3, 0.1, 0.25];
        let observed: Vec<u64> = support.iter().map(|s| counts.get(s).copied().unwrap_or(0)).collect();
        assert!(chi2_pvalue(&observed, &probs) > 0.001);
    }
}
